// circuit_model.hpp: lumped-element two-port model of the capacitively coupled loop-gap resonator

#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lgr {

using Matrix2c = Eigen::Matrix2cd;

// 2x2 ABCD chain matrix at one frequency.
struct TwoPortNetwork {
    Matrix2c abcd = Matrix2c::Identity();

    std::complex<double> a() const { return abcd(0, 0); }
    std::complex<double> b() const { return abcd(0, 1); }
    std::complex<double> c() const { return abcd(1, 0); }
    std::complex<double> d() const { return abcd(1, 1); }
    std::complex<double> det() const { return abcd.determinant(); }
};

namespace detail {
inline void require_finite(std::complex<double> v, const char* what) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw std::invalid_argument(std::string(what) + " must be finite");
}
}  // namespace detail

inline TwoPortNetwork abcd_series(std::complex<double> z) {
    detail::require_finite(z, "series impedance");
    TwoPortNetwork n;
    n.abcd << 1.0, z, 0.0, 1.0;
    return n;
}

inline TwoPortNetwork abcd_shunt(std::complex<double> y) {
    detail::require_finite(y, "shunt admittance");
    TwoPortNetwork n;
    n.abcd << 1.0, 0.0, y, 1.0;
    return n;
}

inline TwoPortNetwork cascade(std::span<const TwoPortNetwork> nets) {
    if (nets.empty()) throw std::invalid_argument("cascade: empty network sequence");
    TwoPortNetwork out = nets.front();
    for (std::size_t k = 1; k < nets.size(); ++k) out.abcd = out.abcd * nets[k].abcd;
    return out;
}

inline TwoPortNetwork cascade(std::initializer_list<TwoPortNetwork> nets) {
    return cascade(std::span<const TwoPortNetwork>(nets.begin(), nets.size()));
}

// S-parameters for equal real reference impedance z0 at both ports.
inline Matrix2c abcd_to_s(const TwoPortNetwork& net, double z0) {
    if (!(z0 > 0.0)) throw std::invalid_argument("abcd_to_s: z0 must be positive");
    const auto a = net.a(), b = net.b(), c = net.c(), d = net.d();
    const std::complex<double> denom = a + b / z0 + c * z0 + d;
    if (std::abs(denom) < 1e-300) throw std::domain_error("abcd_to_s: singular denominator");
    Matrix2c s;
    s(0, 0) = (a + b / z0 - c * z0 - d) / denom;
    s(0, 1) = 2.0 * (a * d - b * c) / denom;
    s(1, 0) = 2.0 / denom;
    s(1, 1) = (-a + b / z0 - c * z0 + d) / denom;
    return s;
}

// Admittance matrix of a two-port; requires B != 0.
inline Matrix2c abcd_to_y(const TwoPortNetwork& net) {
    const auto a = net.a(), b = net.b(), c = net.c(), d = net.d();
    if (std::abs(b) == 0.0) throw std::domain_error("abcd_to_y: network has no admittance representation (B = 0)");
    Matrix2c y;
    y << d / b, (b * c - a * d) / b, -1.0 / b, a / b;
    return y;
}

inline Matrix2c y_to_s(const Matrix2c& y, double z0) {
    if (!(z0 > 0.0)) throw std::invalid_argument("y_to_s: z0 must be positive");
    const Matrix2c yn = y * z0;
    const Matrix2c eye = Matrix2c::Identity();
    return (eye - yn) * (eye + yn).inverse();
}

struct CircuitElements {
    double l_nh = 0.1;
    double c_pf = 8.7;
    double r_ohm = 4400.0;  // parallel loss resistance
    double cc1_ff = 0.0;  // port coupling capacitors
    double cc2_ff = 0.0;
    double cx_ff = 0.0;   // direct port-to-port crosstalk
    double z0_ohm = 50.0;

    void validate() const {
        if (!(l_nh > 0.0) || !(c_pf > 0.0) || !(z0_ohm > 0.0))
            throw std::invalid_argument("CircuitElements: l, c and z0 must be positive");
        if (!(r_ohm > 0.0)) throw std::invalid_argument("CircuitElements: r_loss must be positive");
        if (cc1_ff < 0.0 || cc2_ff < 0.0 || cx_ff < 0.0)
            throw std::invalid_argument("CircuitElements: coupling capacitances must be non-negative");
    }
};

namespace detail {
inline double angular(double f_mhz) { return 2.0 * M_PI * f_mhz * 1e6; }
}  // namespace detail

// Admittance of the parallel L-C-R tank at f (MHz).
inline std::complex<double> tank_admittance(double f_mhz, const CircuitElements& e) {
    const double w = detail::angular(f_mhz);
    const std::complex<double> i{0.0, 1.0};
    return 1.0 / e.r_ohm + i * w * e.c_pf * 1e-12 + 1.0 / (i * w * e.l_nh * 1e-9);
}

// Y-matrix of the full loop-gap two-port: series cc1, shunt tank, series cc2, bridged by cx.
inline Matrix2c loop_gap_y(double f_mhz, const CircuitElements& e) {
    const double w = detail::angular(f_mhz);
    const std::complex<double> i{0.0, 1.0};
    Matrix2c y = Matrix2c::Zero();
    if (e.cc1_ff > 0.0 && e.cc2_ff > 0.0) {
        const auto chain = cascade({abcd_series(1.0 / (i * w * e.cc1_ff * 1e-15)), abcd_shunt(tank_admittance(f_mhz, e)),
                                    abcd_series(1.0 / (i * w * e.cc2_ff * 1e-15))});
        y += abcd_to_y(chain);
    }
    if (e.cx_ff > 0.0) {
        const std::complex<double> yx = i * w * e.cx_ff * 1e-15;
        Matrix2c bridge;
        bridge << yx, -yx, -yx, yx;
        y += bridge;
    }
    return y;
}

// Port-to-port S-matrix, with a port whose coupling capacitor is zero left open.
inline Matrix2c loop_gap_s(double f_mhz, const CircuitElements& e) {
    if (e.cc1_ff > 0.0 && e.cc2_ff > 0.0) return y_to_s(loop_gap_y(f_mhz, e), e.z0_ohm);
    // one port is decoupled from the tank: only self-loading by the other coupling capacitor matters
    // for S11/S22, which stays a pure reactance (|S| = 1); transmission comes from cx alone
    const double w = detail::angular(f_mhz);
    const std::complex<double> i{0.0, 1.0};
    Matrix2c y = loop_gap_y(f_mhz, e);
    auto self = [&](double cc) -> std::complex<double> {
        if (cc <= 0.0) return 0.0;
        const std::complex<double> yc = i * w * cc * 1e-15;
        const std::complex<double> yt = tank_admittance(f_mhz, e);
        return yc * yt / (yc + yt);
    };
    y(0, 0) += self(e.cc1_ff);
    y(1, 1) += self(e.cc2_ff);
    return y_to_s(y, e.z0_ohm);
}

inline std::vector<std::complex<double>> loop_gap_s21(std::span<const double> omega_grid, const CircuitElements& e) {
    e.validate();
    std::vector<std::complex<double>> out(omega_grid.size());
    for (std::size_t k = 0; k < omega_grid.size(); ++k) out[k] = loop_gap_s(omega_grid[k], e)(1, 0);
    return out;
}

struct QDecomposition {
    double omega_0 = 0.0;  // MHz
    double q_int = 0.0;
    double q_ext1 = 0.0;
    double q_ext2 = 0.0;

    double q_ext() const { return 1.0 / (1.0 / q_ext1 + 1.0 / q_ext2); }
    double q_loaded() const { return 1.0 / (1.0 / q_int + 1.0 / q_ext1 + 1.0 / q_ext2); }
};

// Each port (cc in series with z0) loads the tank with a parallel conductance and capacitance.
// The resonance is found self-consistently because the loading depends on frequency.
inline QDecomposition q_decomposition(const CircuitElements& e) {
    e.validate();
    if (e.cx_ff != 0.0) throw std::invalid_argument("q_decomposition requires cx = 0");
    const double l = e.l_nh * 1e-9;
    const double c = e.c_pf * 1e-12;
    struct Load {
        double g, c;
    };
    auto port_load = [&](double cc_ff, double w) -> Load {
        const double cc = cc_ff * 1e-15;
        const double x = w * cc * e.z0_ohm;
        return {w * w * cc * cc * e.z0_ohm / (1.0 + x * x), cc / (1.0 + x * x)};
    };
    double w = 1.0 / std::sqrt(l * c);
    Load p1{}, p2{};
    for (int it = 0; it < 100; ++it) {
        p1 = port_load(e.cc1_ff, w);
        p2 = port_load(e.cc2_ff, w);
        const double w_next = 1.0 / std::sqrt(l * (c + p1.c + p2.c));
        const bool done = std::abs(w_next - w) <= 1e-15 * w;
        w = w_next;
        if (done) break;
    }
    p1 = port_load(e.cc1_ff, w);
    p2 = port_load(e.cc2_ff, w);
    const double c_eff = c + p1.c + p2.c;
    const double inf = std::numeric_limits<double>::infinity();
    QDecomposition q;
    q.omega_0 = w / (2.0 * M_PI) * 1e-6;
    q.q_int = e.r_ohm * std::sqrt(c_eff / l);
    q.q_ext1 = p1.g > 0.0 ? w * c_eff / p1.g : inf;
    q.q_ext2 = p2.g > 0.0 ? w * c_eff / p2.g : inf;
    return q;
}

// Symmetric port capacitance (fF) giving the requested combined external Q, by bisection on the
// monotone Q_ext(cc) relation.
inline double coupling_for_q_ext(CircuitElements e, double q_ext_target) {
    if (!(q_ext_target > 0.0)) throw std::invalid_argument("coupling_for_q_ext: target must be positive");
    e.cx_ff = 0.0;
    auto q_of = [&](double cc) {
        e.cc1_ff = e.cc2_ff = cc;
        return q_decomposition(e).q_ext();
    };
    double lo = 1e-6, hi = 1.0;
    while (q_of(hi) > q_ext_target) {
        hi *= 2.0;
        if (hi > 1e9) throw std::domain_error("coupling_for_q_ext: target Q_ext not reachable");
    }
    if (q_of(lo) < q_ext_target) throw std::domain_error("coupling_for_q_ext: target Q_ext too large");
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (q_of(mid) > q_ext_target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Tank values (L, C, R) for a bare resonance f0 (MHz) and internal Q, keeping the given L.
inline CircuitElements design_tank(double f0_mhz, double q_int, double l_nh, double z0_ohm = 50.0) {
    if (!(f0_mhz > 0.0) || !(q_int > 0.0) || !(l_nh > 0.0)) throw std::invalid_argument("design_tank: inputs must be positive");
    const double w = detail::angular(f0_mhz);
    CircuitElements e;
    e.l_nh = l_nh;
    e.c_pf = 1.0 / (w * w * l_nh * 1e-9) * 1e12;
    e.r_ohm = q_int / (w * e.c_pf * 1e-12);
    e.cc1_ff = e.cc2_ff = e.cx_ff = 0.0;
    e.z0_ohm = z0_ohm;
    return e;
}

}  // namespace lgr
