// spin_models.hpp: NV and P1 spin Hamiltonians, diagonalization and ESR transitions

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace lgr {

using Complex = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using ComplexMatrix = Eigen::MatrixXcd;

// Spin quantum number stored as 2s so half-integers are exact.
class SpinQuantumNumber {
public:
    constexpr SpinQuantumNumber() = default;

    static SpinQuantumNumber from_twice(int twice) {
        if (twice < 0) throw std::invalid_argument("spin quantum number must be non-negative");
        SpinQuantumNumber s;
        s.twice_ = twice;
        return s;
    }

    static SpinQuantumNumber from_value(double s) {
        const double twice = 2.0 * s;
        if (!std::isfinite(s) || s < 0.0 || std::abs(twice - std::round(twice)) > 1e-12)
            throw std::invalid_argument("spin quantum number must be a non-negative half-integer, got " +
                                        std::to_string(s));
        return from_twice(static_cast<int>(std::lround(twice)));
    }

    double value() const { return 0.5 * twice_; }
    int twice() const { return twice_; }
    std::size_t dim() const { return static_cast<std::size_t>(twice_) + 1; }

    friend bool operator==(SpinQuantumNumber, SpinQuantumNumber) = default;

private:
    int twice_ = 0;
};

inline const SpinQuantumNumber spin_half = SpinQuantumNumber::from_twice(1);
inline const SpinQuantumNumber spin_one = SpinQuantumNumber::from_twice(2);

inline double hermiticity_defect(const ComplexMatrix& m) {
    if (m.size() == 0) return 0.0;
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

// Dense complex Hermitian matrix (MHz for Hamiltonians, dimensionless for spin operators).
class HermitianMatrix {
public:
    static constexpr double default_tolerance = 1e-10;

    HermitianMatrix() = default;

    explicit HermitianMatrix(ComplexMatrix m, double tolerance = default_tolerance) : m_(std::move(m)) {
        if (m_.rows() != m_.cols()) throw std::invalid_argument("HermitianMatrix must be square");
        if (!m_.allFinite()) throw std::invalid_argument("HermitianMatrix has non-finite entries");
        const double defect = hermiticity_defect(m_);
        if (defect > tolerance) {
            std::ostringstream os;
            os << "matrix is not Hermitian: max |H - H^dagger| = " << defect;
            throw std::invalid_argument(os.str());
        }
    }

    const ComplexMatrix& matrix() const { return m_; }
    std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
    Complex operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
    Complex trace() const { return m_.trace(); }

private:
    ComplexMatrix m_;
};

struct SpinOperators {
    HermitianMatrix x, y, z;
};

// Angular-momentum matrices in the Sz eigenbasis ordered m = +s ... -s.
inline SpinOperators spin_operators(SpinQuantumNumber s) {
    const auto n = static_cast<Eigen::Index>(s.dim());
    const double sv = s.value();
    ComplexMatrix sz = ComplexMatrix::Zero(n, n);
    ComplexMatrix sp = ComplexMatrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double m = sv - static_cast<double>(k);
        sz(k, k) = m;
        // S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>, and |m+1> sits at index k-1
        if (k > 0) sp(k - 1, k) = std::sqrt(sv * (sv + 1.0) - m * (m + 1.0));
    }
    const ComplexMatrix sm = sp.adjoint();
    const Complex i_unit{0.0, 1.0};
    return {HermitianMatrix(0.5 * (sp + sm)), HermitianMatrix((sp - sm) / (2.0 * i_unit)), HermitianMatrix(sz)};
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Axially symmetric hyperfine tensor; `axis` is given in the defect frame.
struct HyperfineTensor {
    double a_perp = 0.0;  // MHz
    double a_par = 0.0;   // MHz
    Vec3 axis = Vec3::UnitZ();

    Eigen::Matrix3d tensor() const {
        if (std::abs(axis.norm() - 1.0) >= 1e-12)
            throw std::invalid_argument("hyperfine axis must have unit norm");
        return a_perp * Eigen::Matrix3d::Identity() + (a_par - a_perp) * axis * axis.transpose();
    }
};

struct NVParams {
    double gamma_e = 28.0;       // MHz/mT
    double d_zfs = 2877.5;       // MHz
    double quadrupole_p = -5.0;  // MHz
    HyperfineTensor hyperfine{-2.7, -2.1, Vec3::UnitZ()};

    void validate() const {
        if (!(gamma_e > 0.0)) throw std::invalid_argument("NVParams: gamma_e must be positive");
        if (!(d_zfs > 0.0)) throw std::invalid_argument("NVParams: d_zfs must be positive");
    }
};

struct P1Params {
    double gamma_e = 28.0;  // MHz/mT
    HyperfineTensor hyperfine{114.03, 81.33, Vec3::UnitZ()};

    void validate() const {
        if (!(gamma_e > 0.0)) throw std::invalid_argument("P1Params: gamma_e must be positive");
    }
};

inline void require_unit(const Vec3& v, const char* what) {
    if (!v.allFinite() || std::abs(v.norm() - 1.0) >= 1e-12)
        throw std::invalid_argument(std::string(what) + " must be a finite unit vector");
}

inline void require_finite(const Vec3& v, const char* what) {
    if (!v.allFinite()) throw std::invalid_argument(std::string(what) + " has non-finite components");
}

// Minimal rotation taking `axis` onto +z. Anti-parallel input turns 180 deg about x.
inline Eigen::Matrix3d rotation_to_defect_frame(const Vec3& axis) {
    require_unit(axis, "defect axis");
    const Vec3 z = Vec3::UnitZ();
    const double c = axis.dot(z);
    if (c < -1.0 + 1e-15) return Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
    return Eigen::Quaterniond::FromTwoVectors(axis, z).toRotationMatrix();
}

namespace detail {

inline ComplexMatrix coupling_term(const SpinOperators& s, const SpinOperators& i, const Eigen::Matrix3d& a) {
    const std::array<const ComplexMatrix*, 3> so{&s.x.matrix(), &s.y.matrix(), &s.z.matrix()};
    const std::array<const ComplexMatrix*, 3> io{&i.x.matrix(), &i.y.matrix(), &i.z.matrix()};
    const auto n = so[0]->rows() * io[0]->rows();
    ComplexMatrix out = ComplexMatrix::Zero(n, n);
    for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q)
            if (a(p, q) != 0.0) out += a(p, q) * kron(*so[p], *io[q]);
    return out;
}

inline ComplexMatrix zeeman_term(const SpinOperators& s, SpinQuantumNumber nuclear, const Vec3& b_defect,
                                 double gamma_e) {
    const auto ni = static_cast<Eigen::Index>(nuclear.dim());
    const ComplexMatrix eye = ComplexMatrix::Identity(ni, ni);
    const ComplexMatrix sb = b_defect.x() * s.x.matrix() + b_defect.y() * s.y.matrix() + b_defect.z() * s.z.matrix();
    return gamma_e * kron(sb, eye);
}

}  // namespace detail

// H/h on the S=1 (x) I=1 product space, built in the NV frame.
inline HermitianMatrix build_nv_hamiltonian(const Vec3& b_dc, const Vec3& nv_axis, const NVParams& params) {
    params.validate();
    require_finite(b_dc, "b_dc");
    const Vec3 b = rotation_to_defect_frame(nv_axis) * b_dc;
    const auto s = spin_operators(spin_one);
    const auto i = spin_operators(spin_one);
    const ComplexMatrix eye = ComplexMatrix::Identity(3, 3);
    ComplexMatrix h = detail::zeeman_term(s, spin_one, b, params.gamma_e);
    h += params.d_zfs * kron(s.z.matrix() * s.z.matrix(), eye);
    h += detail::coupling_term(s, i, params.hyperfine.tensor());
    h += params.quadrupole_p * kron(eye, i.z.matrix() * i.z.matrix());
    return HermitianMatrix(0.5 * (h + h.adjoint()));
}

// H/h on the S=1/2 (x) I=1 product space, built in the P1 frame.
inline HermitianMatrix build_p1_hamiltonian(const Vec3& b_dc, const Vec3& p1_axis, const P1Params& params) {
    params.validate();
    require_finite(b_dc, "b_dc");
    const Vec3 b = rotation_to_defect_frame(p1_axis) * b_dc;
    const auto s = spin_operators(spin_half);
    const auto i = spin_operators(spin_one);
    ComplexMatrix h = detail::zeeman_term(s, spin_one, b, params.gamma_e);
    h += detail::coupling_term(s, i, params.hyperfine.tensor());
    return HermitianMatrix(0.5 * (h + h.adjoint()));
}

struct NVModel {
    NVParams params;
};
struct P1Model {
    P1Params params;
};
using SpinModel = std::variant<NVModel, P1Model>;

inline SpinQuantumNumber electron_spin(const SpinModel& model) {
    return std::holds_alternative<NVModel>(model) ? spin_one : spin_half;
}

inline double gamma_e(const SpinModel& model) {
    return std::visit([](const auto& m) { return m.params.gamma_e; }, model);
}

inline HermitianMatrix build_hamiltonian(const SpinModel& model, const Vec3& b_dc, const Vec3& axis) {
    return std::visit(
        [&](const auto& m) -> HermitianMatrix {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, NVModel>)
                return build_nv_hamiltonian(b_dc, axis, m.params);
            else
                return build_p1_hamiltonian(b_dc, axis, m.params);
        },
        model);
}

// dH/d|B| at fixed field direction (lab frame), for Hellmann-Feynman slopes.
inline HermitianMatrix zeeman_derivative(const SpinModel& model, const Vec3& b_direction, const Vec3& axis) {
    require_unit(b_direction, "field direction");
    const Vec3 b = rotation_to_defect_frame(axis) * b_direction;
    return HermitianMatrix(detail::zeeman_term(spin_operators(electron_spin(model)), spin_one, b, gamma_e(model)));
}

struct EigenSystem {
    Eigen::VectorXd values;  // MHz
    ComplexMatrix vectors;   // columns
};

inline EigenSystem eigensystem(const HermitianMatrix& h) {
    if (h.dim() == 0) throw std::invalid_argument("eigensystem of an empty matrix");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h.matrix());
    if (solver.info() != Eigen::Success) throw std::runtime_error("Hermitian eigensolver failed to converge");
    return {solver.eigenvalues(), solver.eigenvectors()};
}

struct TransitionLine {
    double freq = 0.0;    // MHz
    double weight = 0.0;  // |<f|drive|i>|^2
    std::size_t from_index = 0;
    std::size_t to_index = 0;
};

inline constexpr double default_weight_floor = 1e-6;

// Electron-spin drive S.n (x) 1 in the product space; `direction` is in the defect frame.
inline HermitianMatrix electron_drive(SpinQuantumNumber electron, SpinQuantumNumber nuclear, const Vec3& direction) {
    require_unit(direction, "drive direction");
    return HermitianMatrix(detail::zeeman_term(spin_operators(electron), nuclear, direction, 1.0));
}

// Drive along a lab-frame AC field direction for a defect oriented along `axis`.
inline HermitianMatrix lab_electron_drive(const SpinModel& model, const Vec3& ac_direction, const Vec3& axis) {
    require_unit(ac_direction, "AC field direction");
    const Vec3 n = rotation_to_defect_frame(axis) * ac_direction;
    return electron_drive(electron_spin(model), spin_one, n.normalized());
}

inline std::vector<TransitionLine> transition_spectrum(const EigenSystem& eig, const HermitianMatrix& drive,
                                                       std::span<const std::size_t> initial_levels,
                                                       double weight_floor = default_weight_floor) {
    const auto n = static_cast<std::size_t>(eig.values.size());
    if (drive.dim() != n) throw std::invalid_argument("drive dimension does not match eigensystem");
    const ComplexMatrix m = eig.vectors.adjoint() * drive.matrix() * eig.vectors;
    std::vector<TransitionLine> lines;
    for (const std::size_t i : initial_levels) {
        if (i >= n) throw std::out_of_range("initial level index " + std::to_string(i) + " out of range");
        for (std::size_t f = 0; f < n; ++f) {
            if (f == i) continue;
            const double w = std::norm(m(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)));
            if (w <= weight_floor) continue;
            lines.push_back({std::abs(eig.values[static_cast<Eigen::Index>(f)] - eig.values[static_cast<Eigen::Index>(i)]),
                             w, i, f});
        }
    }
    return lines;
}

// The four <111> bond directions.
inline std::array<Vec3, 4> bond_orientations() {
    const double r = 1.0 / std::sqrt(3.0);
    return {Vec3(1, 1, 1) * r, Vec3(1, -1, -1) * r, Vec3(-1, 1, -1) * r, Vec3(-1, -1, 1) * r};
}

namespace detail {

// Groups sorted-by-label levels into clusters of (near-)degenerate values.
inline std::vector<std::vector<Eigen::Index>> degenerate_clusters(const Eigen::VectorXd& values, double tol) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<std::vector<Eigen::Index>> clusters;
    for (const auto idx : order) {
        if (!clusters.empty() && values[idx] - values[clusters.back().back()] <= tol)
            clusters.back().push_back(idx);
        else
            clusters.push_back({idx});
    }
    return clusters;
}

}  // namespace detail

// Eigensystems along a field sweep, with column k following one adiabatic level through the sweep.
// Labels are assigned by ascending energy at the first field.
inline std::vector<EigenSystem> level_curve(const SpinModel& model, const Vec3& b_direction, const Vec3& axis,
                                            std::span<const double> b_grid) {
    require_unit(b_direction, "field direction");
    if (b_grid.empty()) throw std::invalid_argument("level_curve needs at least one field point");
    for (std::size_t k = 1; k < b_grid.size(); ++k)
        if (!(b_grid[k] > b_grid[k - 1])) throw std::invalid_argument("level_curve field grid must be strictly increasing");

    constexpr double degeneracy_tol = 1e-7;  // MHz
    std::vector<EigenSystem> out;
    out.reserve(b_grid.size());
    out.push_back(eigensystem(build_hamiltonian(model, b_grid[0] * b_direction, axis)));
    for (std::size_t k = 1; k < b_grid.size(); ++k) {
        const EigenSystem next = eigensystem(build_hamiltonian(model, b_grid[k] * b_direction, axis));
        const EigenSystem& prev = out.back();
        const auto n = prev.values.size();
        // overlap(new j, old i)^2
        const Eigen::MatrixXd ov = (next.vectors.adjoint() * prev.vectors).cwiseAbs2();

        EigenSystem tracked{Eigen::VectorXd(n), ComplexMatrix(n, n)};
        std::vector<bool> taken(static_cast<std::size_t>(n), false);
        for (const auto& cluster : detail::degenerate_clusters(prev.values, degeneracy_tol)) {
            // weight of each new state inside the old (possibly degenerate) subspace
            std::vector<std::pair<double, Eigen::Index>> cand;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (taken[static_cast<std::size_t>(j)]) continue;
                double w = 0.0;
                for (const auto i : cluster) w += ov(j, i);
                cand.emplace_back(w, j);
            }
            std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
            const auto m = cluster.size();
            if (cand.size() < m || cand[m - 1].first < 0.5) {
                std::ostringstream os;
                os << "level tracking lost continuity between B = " << b_grid[k - 1] << " mT and B = " << b_grid[k]
                   << " mT (field step " << (b_grid[k] - b_grid[k - 1]) << " mT); refine the grid";
                throw std::runtime_error(os.str());
            }
            std::vector<Eigen::Index> picked;
            for (std::size_t c = 0; c < m; ++c) picked.push_back(cand[c].second);
            if (m == 1) {
                const auto j = picked[0];
                tracked.values[cluster[0]] = next.values[j];
                // fix the phase so consecutive vectors have real positive overlap
                const Complex phase = next.vectors.col(j).dot(prev.vectors.col(cluster[0]));
                const Complex unit = std::abs(phase) > 0.0 ? phase / std::abs(phase) : Complex{1.0, 0.0};
                tracked.vectors.col(cluster[0]) = next.vectors.col(j) * unit;
                taken[static_cast<std::size_t>(j)] = true;
            } else {
                // inside a degenerate block labels follow energy order
                std::sort(picked.begin(), picked.end(), [&](auto a, auto b) { return next.values[a] < next.values[b]; });
                std::vector<Eigen::Index> slots(cluster.begin(), cluster.end());
                std::sort(slots.begin(), slots.end());
                for (std::size_t c = 0; c < m; ++c) {
                    tracked.values[slots[c]] = next.values[picked[c]];
                    tracked.vectors.col(slots[c]) = next.vectors.col(picked[c]);
                    taken[static_cast<std::size_t>(picked[c])] = true;
                }
            }
        }
        out.push_back(std::move(tracked));
    }
    return out;
}

// Gap between the centroids of two electron manifolds of `manifold_size` levels each,
// with manifolds indexed by ascending energy (|0>, |1>, |2> for the NV).
inline double manifold_gap(const EigenSystem& eig, std::size_t lower, std::size_t upper, std::size_t manifold_size) {
    std::vector<double> v(eig.values.data(), eig.values.data() + eig.values.size());
    std::sort(v.begin(), v.end());
    if ((std::max(lower, upper) + 1) * manifold_size > v.size()) throw std::out_of_range("manifold index out of range");
    auto centroid = [&](std::size_t k) {
        return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(k * manifold_size),
                               v.begin() + static_cast<std::ptrdiff_t>((k + 1) * manifold_size), 0.0) /
               static_cast<double>(manifold_size);
    };
    return centroid(upper) - centroid(lower);
}

// NV |0> <-> |2> ESR frequency (lowest to highest electron manifold), averaged over the 14N states.
inline double nv_transition_frequency(const Vec3& b_dc, const Vec3& nv_axis, const NVParams& params) {
    return manifold_gap(eigensystem(build_nv_hamiltonian(b_dc, nv_axis, params)), 0, 2, 3);
}

// Drive weight summed over the `upper` manifold and averaged over the `lower` one. Expects the
// ascending eigensystem returned by eigensystem().
inline double manifold_transition_weight(const EigenSystem& eig, const HermitianMatrix& drive, std::size_t lower,
                                         std::size_t upper, std::size_t manifold_size) {
    const auto n = static_cast<std::size_t>(eig.values.size());
    if ((std::max(lower, upper) + 1) * manifold_size > n) throw std::out_of_range("manifold index out of range");
    std::vector<std::size_t> init(manifold_size);
    std::iota(init.begin(), init.end(), lower * manifold_size);
    double total = 0.0;
    for (const auto& l : transition_spectrum(eig, drive, init, 0.0))
        if (l.to_index / manifold_size == upper) total += l.weight;
    return total / static_cast<double>(manifold_size);
}

struct LabeledLine {
    int m_i = 0;  // nuclear projection label
    TransitionLine line;
};

// The three nuclear-spin-conserving P1 lines out of the ground m_S = -1/2 manifold, labelled m_I = +1, 0, -1.
// For a positive effective hyperfine constant, m_I = +1 is the highest-frequency line.
inline std::array<LabeledLine, 3> p1_nuclear_conserving_lines(const Vec3& b_dc, const Vec3& p1_axis,
                                                              const P1Params& params, const Vec3& ac_direction) {
    if (!(b_dc.norm() > 0.0)) throw std::invalid_argument("P1 line labelling needs a non-zero field");
    const EigenSystem eig = eigensystem(build_p1_hamiltonian(b_dc, p1_axis, params));
    const HermitianMatrix drive = lab_electron_drive(P1Model{params}, ac_direction, p1_axis);
    const std::array<std::size_t, 3> ground{0, 1, 2};
    auto lines = transition_spectrum(eig, drive, ground, 0.0);
    // keep upward lines only, then the strongest one from each ground level
    std::array<TransitionLine, 3> best{};
    for (const auto& l : lines) {
        if (l.to_index < 3) continue;
        if (l.weight > best[l.from_index].weight) best[l.from_index] = l;
    }
    std::array<TransitionLine, 3> sorted = best;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.freq > b.freq; });
    const Eigen::Matrix3d a = params.hyperfine.tensor();
    const Vec3 bd = rotation_to_defect_frame(p1_axis) * b_dc.normalized();
    const bool positive = bd.dot(a * bd) >= 0.0;
    std::array<LabeledLine, 3> out;
    for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(k)] = {positive ? 1 - k : k - 1, sorted[static_cast<std::size_t>(k)]};
    return out;
}

// A lab direction perpendicular to `b` (the AC field of the loop-gap mode is transverse to B_DC).
inline Vec3 default_ac_direction(const Vec3& b) {
    const Vec3 bn = b.normalized();
    Vec3 c = bn.cross(Vec3::UnitZ());
    if (c.norm() < 1e-9) c = bn.cross(Vec3::UnitX());
    return c.normalized();
}

}  // namespace lgr
