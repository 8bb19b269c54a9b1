// fitting.hpp: lineshape fits, Q extraction and avoided-crossing fits

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lgr/cavity_qed.hpp"
#include "lgr/least_squares.hpp"

namespace lgr {

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Spectrum1D {
    std::vector<double> omega;      // MHz
    std::vector<double> magnitude;  // linear

    void validate() const {
        if (omega.size() != magnitude.size()) throw std::invalid_argument("Spectrum1D: omega and magnitude lengths differ");
        for (double m : magnitude)
            if (!(m >= 0.0)) throw std::invalid_argument("Spectrum1D: magnitudes must be non-negative");
    }
};

// |S21| -> |S21|^2. The -3 dB width of a resonance is the FWHM of the power trace.
inline Spectrum1D power_spectrum(const Spectrum1D& s) {
    Spectrum1D out{s.omega, s.magnitude};
    for (double& m : out.magnitude) m *= m;
    return out;
}

inline Spectrum1D magnitude_spectrum(std::span<const double> omega, std::span<const std::complex<double>> s21) {
    if (omega.size() != s21.size()) throw std::invalid_argument("magnitude_spectrum: length mismatch");
    Spectrum1D out;
    out.omega.assign(omega.begin(), omega.end());
    out.magnitude.reserve(s21.size());
    for (const auto& v : s21) out.magnitude.push_back(std::abs(v));
    return out;
}

struct FitResult {
    std::vector<std::pair<std::string, double>> params;
    double residual_rms = 0.0;
    bool converged = false;
    int iterations = 0;

    double at(std::string_view name) const {
        for (const auto& [k, v] : params)
            if (k == name) return v;
        throw std::out_of_range("FitResult has no parameter '" + std::string(name) + "'");
    }
    bool has(std::string_view name) const {
        return std::any_of(params.begin(), params.end(), [&](const auto& kv) { return kv.first == name; });
    }
};

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
    return m;
}

// Noise sigma from first differences, insensitive to the smooth signal underneath.
inline double difference_noise(std::span<const double> y) {
    if (y.size() < 3) return 0.0;
    std::vector<double> d(y.size() - 1);
    for (std::size_t k = 0; k + 1 < y.size(); ++k) d[k] = std::abs(y[k + 1] - y[k]);
    return 1.4826 * median(std::move(d)) / std::sqrt(2.0);
}

struct PeakGuess {
    double center, half_width, amplitude, baseline;
};

inline PeakGuess guess_peak(const Spectrum1D& s) {
    const auto& y = s.magnitude;
    const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    const double base = *std::min_element(y.begin(), y.end());
    const double half = base + 0.5 * (y[imax] - base);
    auto cross = [&](int dir) {
        std::ptrdiff_t k = static_cast<std::ptrdiff_t>(imax);
        const auto n = static_cast<std::ptrdiff_t>(y.size());
        while (k + dir >= 0 && k + dir < n && y[static_cast<std::size_t>(k + dir)] > half) k += dir;
        const auto k2 = k + dir;
        if (k2 < 0 || k2 >= n) return s.omega[static_cast<std::size_t>(k)];
        const double y1 = y[static_cast<std::size_t>(k)], y2 = y[static_cast<std::size_t>(k2)];
        const double t = (y1 - half) / (y1 - y2);
        return s.omega[static_cast<std::size_t>(k)] + t * (s.omega[static_cast<std::size_t>(k2)] - s.omega[static_cast<std::size_t>(k)]);
    };
    double hw = 0.5 * std::abs(cross(+1) - cross(-1));
    const double step = std::abs(s.omega.back() - s.omega.front()) / static_cast<double>(s.omega.size() - 1);
    hw = std::max(hw, step);
    return {s.omega[imax], hw, y[imax] - base, base};
}

// A Lorentzian needs a peak above the background; a Fano feature may sit on a large background
// or be a pure dip, so it only has to stand out of the point-to-point noise.
inline void check_peak_input(const Spectrum1D& s, bool require_peak = true) {
    s.validate();
    if (s.omega.size() < 8) throw FitError("peak fit needs at least 8 points, got " + std::to_string(s.omega.size()));
    require_strictly_monotone(s.omega, "frequency axis");
    const double mx = *std::max_element(s.magnitude.begin(), s.magnitude.end());
    if (require_peak) {
        if (!(mx > 2.0 * median(s.magnitude))) throw FitError("no discernible peak (maximum does not exceed twice the median)");
        return;
    }
    const double mn = *std::min_element(s.magnitude.begin(), s.magnitude.end());
    if (!(mx - mn > 10.0 * difference_noise(s.magnitude))) throw FitError("no discernible feature above the noise");
}

// Peak guess on the inverted trace: center and half width of the deepest dip.
inline PeakGuess guess_dip(const Spectrum1D& s) {
    const double mx = *std::max_element(s.magnitude.begin(), s.magnitude.end());
    Spectrum1D inv{s.omega, s.magnitude};
    for (double& m : inv.magnitude) m = mx - m;
    return guess_peak(inv);
}

inline double rms(const Eigen::VectorXd& r) { return r.size() ? std::sqrt(r.squaredNorm() / static_cast<double>(r.size())) : 0.0; }

}  // namespace detail

struct PeakFitOptions {
    LeastSquaresOptions solver{};
};

// baseline + amplitude * (fwhm/2)^2 / ((omega - center)^2 + (fwhm/2)^2), fit to the values as given.
inline FitResult fit_lorentzian(const Spectrum1D& spec, const PeakFitOptions& opt = {}) {
    detail::check_peak_input(spec);
    const auto g = detail::guess_peak(spec);
    const double ref = 0.5 * (spec.omega.front() + spec.omega.back());
    const double xs = g.half_width;
    const double ys = *std::max_element(spec.magnitude.begin(), spec.magnitude.end());
    const auto n = static_cast<Eigen::Index>(spec.omega.size());
    Eigen::VectorXd u(n), y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        u[k] = (spec.omega[static_cast<std::size_t>(k)] - ref) / xs;
        y[k] = spec.magnitude[static_cast<std::size_t>(k)] / ys;
    }

    // p = (center, half width, amplitude, baseline) in scaled units
    LeastSquaresProblem prob;
    prob.n_residuals = n;
    prob.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const double h2 = p[1] * p[1];
        for (Eigen::Index k = 0; k < n; ++k) {
            const double d = u[k] - p[0];
            r[k] = p[3] + p[2] * h2 / (d * d + h2) - y[k];
        }
    };
    prob.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
        j.resize(n, 4);
        const double h = p[1], h2 = h * h;
        for (Eigen::Index k = 0; k < n; ++k) {
            const double d = u[k] - p[0];
            const double den = d * d + h2;
            const double l = h2 / den;
            j(k, 0) = p[2] * 2.0 * d * h2 / (den * den);
            j(k, 1) = p[2] * 2.0 * h * d * d / (den * den);
            j(k, 2) = l;
            j(k, 3) = 1.0;
        }
    };
    Eigen::VectorXd p0(4);
    p0 << (g.center - ref) / xs, 1.0, g.amplitude / ys, g.baseline / ys;
    const auto res = levenberg_marquardt(prob, p0, opt.solver);
    Eigen::VectorXd r(n);
    prob.residuals(res.params, r);

    FitResult out;
    out.params = {{"center", ref + res.params[0] * xs},
                  {"fwhm", 2.0 * std::abs(res.params[1]) * xs},
                  {"amplitude", res.params[2] * ys},
                  {"baseline", res.params[3] * ys}};
    out.residual_rms = detail::rms(r) * ys;
    out.converged = res.converged && res.params.allFinite();
    out.iterations = res.iterations;
    return out;
}

// Fano lineshape with asymmetry q; internally q = cot(theta) so both limits (q -> inf Lorentzian,
// q = 0 antiresonance) are regular points.
inline double fano_value(double omega, double center, double width, double q_asym, double amplitude, double baseline) {
    const double d = omega - center;
    const double h = 0.5 * width;
    if (std::isinf(q_asym)) return baseline + amplitude * h * h / (d * d + h * h);
    const double num = q_asym * h + d;
    return baseline + amplitude * num * num / ((d * d + h * h) * (1.0 + q_asym * q_asym));
}

inline FitResult fit_fano(const Spectrum1D& spec, const PeakFitOptions& opt = {}) {
    detail::check_peak_input(spec, false);
    const auto g = detail::guess_peak(spec);
    const auto dip = detail::guess_dip(spec);
    const double ref = 0.5 * (spec.omega.front() + spec.omega.back());
    const double xs = g.half_width;
    const double ys = *std::max_element(spec.magnitude.begin(), spec.magnitude.end());
    const auto n = static_cast<Eigen::Index>(spec.omega.size());
    Eigen::VectorXd u(n), y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        u[k] = (spec.omega[static_cast<std::size_t>(k)] - ref) / xs;
        y[k] = spec.magnitude[static_cast<std::size_t>(k)] / ys;
    }

    // p = (center, half width, theta, amplitude, baseline)
    LeastSquaresProblem prob;
    prob.n_residuals = n;
    prob.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const double c = std::cos(p[2]), s = std::sin(p[2]);
        for (Eigen::Index k = 0; k < n; ++k) {
            const double d = u[k] - p[0];
            const double num = c * p[1] + s * d;
            r[k] = p[4] + p[3] * num * num / (d * d + p[1] * p[1]) - y[k];
        }
    };
    prob.jacobian = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
        j.resize(n, 5);
        const double c = std::cos(p[2]), s = std::sin(p[2]);
        const double h = p[1];
        for (Eigen::Index k = 0; k < n; ++k) {
            const double d = u[k] - p[0];
            const double num = c * h + s * d;
            const double den = d * d + h * h;
            const double f = num * num / den;
            // d/dd of f, then chain rule with dd/dcenter = -1
            const double df_dd = (2.0 * num * s * den - num * num * 2.0 * d) / (den * den);
            const double df_dh = (2.0 * num * c * den - num * num * 2.0 * h) / (den * den);
            const double df_dt = 2.0 * num * (-s * h + c * d) / den;
            j(k, 0) = -p[3] * df_dd;
            j(k, 1) = p[3] * df_dh;
            j(k, 2) = p[3] * df_dt;
            j(k, 3) = f;
            j(k, 4) = 1.0;
        }
    };

    LeastSquaresResult best;
    best.cost = std::numeric_limits<double>::infinity();
    for (const double theta0 : {0.0, -0.5, 0.5, -1.0, 1.0}) {
        Eigen::VectorXd p0(5);
        // the amplitude guess is normalized so the guessed curve peaks at the data maximum
        const double c = std::cos(theta0);
        p0 << (g.center - ref) / xs, 1.0, theta0, g.amplitude / ys / std::max(c * c, 0.25), g.baseline / ys;
        auto res = levenberg_marquardt(prob, p0, opt.solver);
        if (res.cost < best.cost) best = std::move(res);
        // same shape seeded as a dip below the maximum
        p0 << (dip.center - ref) / xs, dip.half_width / xs, theta0, -dip.amplitude / ys / std::max(c * c, 0.25), 1.0;
        res = levenberg_marquardt(prob, p0, opt.solver);
        if (res.cost < best.cost) best = std::move(res);
    }
    // f(theta) + f(theta + pi/2) = 1, so (A, theta, B) and (-A, theta + pi/2, B + A) are the same
    // curve; report the branch with a positive amplitude
    if (best.params[3] < 0.0) {
        best.params[4] += best.params[3];
        best.params[3] = -best.params[3];
        best.params[2] += 0.5 * M_PI;
    }
    Eigen::VectorXd r(n);
    prob.residuals(best.params, r);
    const double s = std::sin(best.params[2]), c = std::cos(best.params[2]);
    double q = s == 0.0 ? std::copysign(std::numeric_limits<double>::infinity(), c) : c / s;
    // the (q*h + d)^2 form is symmetric under (q, h) -> (-q, -h); report a positive width
    if (best.params[1] < 0.0) q = -q;

    FitResult out;
    out.params = {{"center", ref + best.params[0] * xs},
                  {"width", 2.0 * std::abs(best.params[1]) * xs},
                  {"q_asym", q},
                  {"amplitude", best.params[3] * ys},
                  {"baseline", best.params[4] * ys}};
    out.residual_rms = detail::rms(r) * ys;
    out.converged = best.converged && best.params.allFinite();
    out.iterations = best.iterations;
    return out;
}

struct QExtraction {
    double q_loaded = 0.0;
    double q_ext = 0.0;  // combined over both ports
    double q_int = 0.0;
};

// Symmetric two-port convention: |S21(center)| = Q_L / Q_ext.
inline QExtraction extract_qs(const FitResult& lorentzian, double insertion_loss_peak) {
    if (!(insertion_loss_peak > 0.0) || !(insertion_loss_peak < 1.0))
        throw std::invalid_argument("extract_qs: peak |S21| must lie strictly between 0 and 1");
    const double fwhm = lorentzian.at("fwhm");
    if (!(fwhm > 0.0)) throw std::invalid_argument("extract_qs: non-positive fitted width");
    QExtraction q;
    q.q_loaded = lorentzian.at("center") / fwhm;
    q.q_ext = q.q_loaded / insertion_loss_peak;
    const double inv_int = 1.0 / q.q_loaded - 1.0 / q.q_ext;
    if (!(inv_int > 0.0)) throw std::domain_error("extract_qs: 1/Q_int is not positive");
    q.q_int = 1.0 / inv_int;
    return q;
}

struct ResonanceQ {
    FitResult fit;  // Lorentzian fit of |S21|^2
    double peak_magnitude = 0.0;
    QExtraction q;
};

// Lorentzian fit of the power trace, then Q decomposition from the fitted peak transmission.
inline ResonanceQ measure_q(const Spectrum1D& magnitude, const PeakFitOptions& opt = {}) {
    ResonanceQ out;
    out.fit = fit_lorentzian(power_spectrum(magnitude), opt);
    out.peak_magnitude = std::sqrt(std::max(0.0, out.fit.at("amplitude") + out.fit.at("baseline")));
    out.q = extract_qs(out.fit, out.peak_magnitude);
    return out;
}

// ---------------------------------------------------------------------------------------
// Avoided crossings
// ---------------------------------------------------------------------------------------

struct ColumnPeaks {
    double b = 0.0;
    std::vector<double> peaks;  // ascending frequency, at most two
};

struct CrossingFitOptions {
    double noise_threshold = 3.0;  // peaks must exceed median + threshold * sigma
    bool refine_lineshape = true;  // full-map |S21| refinement after the peak fit
    LeastSquaresOptions solver{};
};

namespace detail {

inline std::vector<double> boxcar(std::span<const double> y, std::size_t half) {
    if (half == 0) return {y.begin(), y.end()};
    std::vector<double> out(y.size());
    const auto n = y.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k >= half ? k - half : 0;
        const std::size_t hi = std::min(n - 1, k + half);
        double acc = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) acc += y[j];
        out[k] = acc / static_cast<double>(hi - lo + 1);
    }
    return out;
}

}  // namespace detail

// Two strongest resolvable local maxima of one column, ascending in frequency. A peak must exceed
// median + threshold * sigma and stand out from its surroundings by the same margin; sigma defaults to a first-difference noise estimate of `mag`.
inline std::vector<double> pick_peaks(std::span<const double> omega, std::span<const double> mag, double threshold,
                                      double min_separation, std::optional<double> sigma = std::nullopt) {
    const double base = detail::median(std::vector<double>(mag.begin(), mag.end()));
    const double noise = threshold * sigma.value_or(detail::difference_noise(mag));
    // prominence: height above the higher of the two valleys separating k from taller samples
    auto prominence = [&](std::size_t k) {
        double left = mag[k], right = mag[k];
        for (std::size_t j = k; j-- > 0;) {
            if (mag[j] > mag[k]) break;
            left = std::min(left, mag[j]);
        }
        for (std::size_t j = k + 1; j < mag.size(); ++j) {
            if (mag[j] > mag[k]) break;
            right = std::min(right, mag[j]);
        }
        return mag[k] - std::max(left, right);
    };
    std::vector<std::size_t> cand;
    for (std::size_t k = 1; k + 1 < mag.size(); ++k)
        if (mag[k] > mag[k - 1] && mag[k] >= mag[k + 1] && mag[k] > base + noise && prominence(k) > noise)
            cand.push_back(k);
    std::stable_sort(cand.begin(), cand.end(), [&](auto a, auto b) { return mag[a] > mag[b]; });
    std::vector<double> out;
    std::vector<double> raw;
    for (const auto k : cand) {
        const bool far = std::all_of(raw.begin(), raw.end(), [&](double w) { return std::abs(w - omega[k]) >= min_separation; });
        if (!far) continue;
        raw.push_back(omega[k]);
        // sub-grid refinement by a parabola through the three samples
        const double y0 = mag[k - 1], y1 = mag[k], y2 = mag[k + 1];
        const double den = y0 - 2.0 * y1 + y2;
        const double shift = den != 0.0 ? 0.5 * (y0 - y2) / den : 0.0;
        out.push_back(omega[k] + shift * (omega[k + 1] - omega[k - 1]) * 0.5);
        if (out.size() == 2) break;
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline SpectrumMap crop_map(const SpectrumMap& map, double b_lo, double b_hi) {
    SpectrumMap out;
    out.omega_axis = map.omega_axis;
    for (std::size_t i = 0; i < map.rows(); ++i) {
        if (map.b_axis[i] < b_lo || map.b_axis[i] > b_hi) continue;
        out.b_axis.push_back(map.b_axis[i]);
        for (std::size_t j = 0; j < map.cols(); ++j) out.values.push_back(map.at(i, j));
    }
    return out;
}

// Fit g_ens, omega_r, b_star and the spin-line slope from a (B, omega) map.
// Stage 1 fits picked peak positions to the polariton branches; stage 2 refines against the full
// |S21| map with the input-output lineshape (adds kappa, gamma and the transmission scale).
inline FitResult fit_avoided_crossing(const SpectrumMap& map, const CrossingFitOptions& opt = {}) {
    if (map.rows() < 5) throw FitError("avoided-crossing fit needs at least 5 field columns");
    if (map.cols() < 8) throw FitError("avoided-crossing fit needs at least 8 frequency points");
    require_strictly_monotone(map.omega_axis, "frequency axis");
    const double d_omega = std::abs(map.omega_axis[1] - map.omega_axis[0]);

    double mag_scale = 0.0;
    for (const auto& v : map.values) mag_scale = std::max(mag_scale, std::abs(v));
    if (!(mag_scale > 0.0)) throw FitError("map has no transmission");

    // noise level of the map; noisy columns are smoothed before peak picking
    std::vector<double> row_noise;
    for (std::size_t i = 0; i < map.rows(); ++i) row_noise.push_back(detail::difference_noise(map.magnitude_row(i)));
    const double sigma = detail::median(row_noise);
    const bool noisy = sigma > 1e-3 * mag_scale;

    // cavity width from the first column sets the smoothing and the peak-separation floor
    double width_est = 0.0;
    {
        const auto m0 = detail::boxcar(map.magnitude_row(0), noisy ? 3 : 0);
        width_est = 2.0 * detail::guess_peak(Spectrum1D{map.omega_axis, m0}).half_width;
    }
    const std::size_t smooth = noisy ? std::max<std::size_t>(1, static_cast<std::size_t>(0.15 * width_est / d_omega)) : 0;
    const double sigma_smoothed = sigma / std::sqrt(2.0 * static_cast<double>(smooth) + 1.0);
    const double min_sep = std::max(3.0 * d_omega, 0.5 * width_est);

    std::vector<ColumnPeaks> cols;
    for (std::size_t i = 0; i < map.rows(); ++i) {
        const auto m = detail::boxcar(map.magnitude_row(i), smooth);
        auto p = noisy ? pick_peaks(map.omega_axis, m, opt.noise_threshold, min_sep, sigma_smoothed)
                       : pick_peaks(map.omega_axis, m, opt.noise_threshold, min_sep);
        if (!p.empty()) cols.push_back({map.b_axis[i], std::move(p)});
    }
    if (cols.size() < 5) throw FitError("fewer than 5 usable field columns with a resolvable peak");
    std::vector<const ColumnPeaks*> pairs;
    for (const auto& c : cols)
        if (c.peaks.size() == 2) pairs.push_back(&c);
    if (pairs.size() < 2) throw FitError("no level repulsion detected (fewer than two columns with two resolvable peaks)");

    // omega_r from the far-detuned columns: the strongest peak of the first and last columns
    auto strongest = [&](std::size_t row) {
        const auto m = detail::boxcar(map.magnitude_row(row), smooth);
        const auto k = static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin());
        return map.omega_axis[k];
    };
    double omega_r0 = 0.5 * (strongest(0) + strongest(map.rows() - 1));

    // omega_s = p- + p+ - omega_r holds exactly for the lossless branches
    const ColumnPeaks* tightest = *std::min_element(pairs.begin(), pairs.end(), [](auto a, auto b) {
        return a->peaks[1] - a->peaks[0] < b->peaks[1] - b->peaks[0];
    });
    double g0 = 0.5 * (tightest->peaks[1] - tightest->peaks[0]);
    double slope0 = 0.0, b_star0 = tightest->b;
    {
        double sb = 0, sw = 0, sbb = 0, sbw = 0;
        for (const auto* c : pairs) {
            const double ws = c->peaks[0] + c->peaks[1] - omega_r0;
            sb += c->b;
            sw += ws;
            sbb += c->b * c->b;
            sbw += c->b * ws;
        }
        const double np = static_cast<double>(pairs.size());
        const double den = np * sbb - sb * sb;
        if (den > 0.0) {
            slope0 = (np * sbw - sb * sw) / den;
            const double icpt = (sw - slope0 * sb) / np;
            if (slope0 != 0.0) b_star0 = (omega_r0 - icpt) / slope0;
        }
    }
    if (!(std::abs(slope0) > 0.0) || !std::isfinite(b_star0))
        throw FitError("could not determine the spin-line slope from the peak trajectories");
    const double b_lo = map.b_axis.front(), b_hi = map.b_axis.back();
    if (b_star0 < std::min(b_lo, b_hi) || b_star0 > std::max(b_lo, b_hi))
        throw FitError("avoided crossing is not inside the field range of the map");

    // stage 1: peak positions
    struct Obs {
        double b, w;
        int branch;  // -1 lower, +1 upper
    };
    std::vector<Obs> obs;
    auto branches = [](double wr, double bs, double sl, double g, double b) {
        return polariton_frequencies(wr, wr + sl * (b - bs), std::abs(g));
    };
    for (const auto& c : cols) {
        if (c.peaks.size() == 2) {
            obs.push_back({c.b, c.peaks[0], -1});
            obs.push_back({c.b, c.peaks[1], +1});
        } else {
            const auto pp = branches(omega_r0, b_star0, slope0, g0, c.b);
            const int br = std::abs(c.peaks[0] - pp.omega_minus) < std::abs(c.peaks[0] - pp.omega_plus) ? -1 : +1;
            obs.push_back({c.b, c.peaks[0], br});
        }
    }
    const double ws = std::max(g0, 4.0 * d_omega);  // frequency scale
    const double bscale = ws / std::abs(slope0);
    auto unpack = [&](const Eigen::VectorXd& p) {
        return std::array<double, 4>{p[0] * ws, omega_r0 + p[1] * ws, b_star0 + p[2] * bscale, p[3] * ws / bscale};
    };
    std::vector<bool> active(obs.size(), true);
    LeastSquaresProblem peak_prob;
    peak_prob.n_residuals = static_cast<Eigen::Index>(obs.size());
    peak_prob.residuals = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        const auto [g, wr, bs, sl] = unpack(p);
        for (std::size_t k = 0; k < obs.size(); ++k) {
            const auto pp = branches(wr, bs, sl, g, obs[k].b);
            const double model = obs[k].branch < 0 ? pp.omega_minus : pp.omega_plus;
            r[static_cast<Eigen::Index>(k)] = active[k] ? (model - obs[k].w) / ws : 0.0;
        }
    };
    Eigen::VectorXd p(4);
    p << g0 / ws, 0.0, 0.0, slope0 * bscale / ws;
    auto stage1 = levenberg_marquardt(peak_prob, p, opt.solver);
    {
        // drop gross outliers (noise spikes taken as peaks) and refit once
        Eigen::VectorXd r(peak_prob.n_residuals);
        peak_prob.residuals(stage1.params, r);
        std::vector<double> a(obs.size());
        for (std::size_t k = 0; k < obs.size(); ++k) a[k] = std::abs(r[static_cast<Eigen::Index>(k)]);
        const double mad = detail::median(a);
        bool dropped = false;
        for (std::size_t k = 0; k < obs.size(); ++k)
            if (a[k] > std::max(6.0 * mad, 2.0 * d_omega / ws)) {
                active[k] = false;
                dropped = true;
            }
        if (dropped) stage1 = levenberg_marquardt(peak_prob, stage1.params, opt.solver);
    }
    const auto s1 = unpack(stage1.params);
    Eigen::VectorXd r1(peak_prob.n_residuals);
    peak_prob.residuals(stage1.params, r1);

    FitResult out;
    const double g_peaks = std::abs(s1[0]);
    if (!opt.refine_lineshape) {
        out.params = {{"g_ens", g_peaks}, {"omega_r", s1[1]}, {"b_star", s1[2]}, {"slope", s1[3]}, {"g_ens_peaks", g_peaks}};
        out.residual_rms = detail::rms(r1) * ws;
        out.converged = stage1.converged;
        out.iterations = stage1.iterations;
        return out;
    }

    // stage 2: full-map magnitude fit
    double kappa0 = width_est;
    double amp0 = 0.0;
    {
        const auto m0 = detail::boxcar(map.magnitude_row(0), smooth);
        amp0 = *std::max_element(m0.begin(), m0.end()) * 0.5 * kappa0;
    }
    const auto n_res = static_cast<Eigen::Index>(map.values.size());
    const double wr1 = s1[1], bs1 = s1[2], sl1 = s1[3];
    const double bscale1 = ws / std::abs(sl1);
    // q = (g, omega_r, b_star, slope, ln kappa, ln gamma, amplitude, cavity drift), scaled.
    // The drift term absorbs the B-dependent dispersive pull of spectator lines outside the window.
    auto unpack2 = [&](const Eigen::VectorXd& q) {
        return std::array<double, 8>{q[0] * ws,           wr1 + q[1] * ws,           bs1 + q[2] * bscale1,
                                     q[3] * ws / bscale1, kappa0 * std::exp(q[4]),    kappa0 * std::exp(q[5]),
                                     q[6] * mag_scale * kappa0, q[7] * ws / bscale1};
    };
    LeastSquaresProblem map_prob;
    map_prob.n_residuals = n_res;
    map_prob.residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
        const auto v = unpack2(q);
        const std::complex<double> i{0.0, 1.0};
        for (std::size_t ib = 0; ib < map.rows(); ++ib) {
            const double db = map.b_axis[ib] - v[2];
            const double wsb = v[1] + v[3] * db;
            const double wrb = v[1] + v[7] * db;
            for (std::size_t j = 0; j < map.cols(); ++j) {
                const double w = map.omega_axis[j];
                const std::complex<double> den =
                    i * (w - wrb) + 0.5 * v[4] + v[0] * v[0] / (i * (w - wsb) + 0.5 * v[5]);
                r[static_cast<Eigen::Index>(ib * map.cols() + j)] =
                    (std::abs(v[6] / den) - std::abs(map.at(ib, j))) / mag_scale;
            }
        }
    };
    Eigen::VectorXd q0(8);
    q0 << g_peaks / ws, 0.0, 0.0, sl1 * bscale1 / ws, 0.0, 0.0, amp0 / (mag_scale * kappa0), 0.0;
    auto stage2 = levenberg_marquardt(map_prob, q0, opt.solver);
    const auto v = unpack2(stage2.params);
    Eigen::VectorXd r2(n_res);
    map_prob.residuals(stage2.params, r2);

    // a refinement that wanders far from the peak estimate has locked onto something else
    if (!stage2.params.allFinite() || std::abs(std::abs(v[0]) - g_peaks) > 0.5 * g_peaks) {
        out.params = {{"g_ens", g_peaks}, {"omega_r", s1[1]}, {"b_star", s1[2]}, {"slope", s1[3]}, {"g_ens_peaks", g_peaks}};
        out.residual_rms = detail::rms(r1) * ws;
        out.converged = false;
        out.iterations = stage1.iterations + stage2.iterations;
        return out;
    }
    out.params = {{"g_ens", std::abs(v[0])}, {"omega_r", v[1]}, {"b_star", v[2]},     {"slope", v[3]},
                  {"kappa", v[4]},           {"gamma", v[5]},   {"s21_scale", v[6]},
                  {"cavity_drift", v[7]}, {"g_ens_peaks", g_peaks}};
    out.residual_rms = detail::rms(r2) * mag_scale;
    out.converged = stage2.converged && stage2.params.allFinite();
    out.iterations = stage1.iterations + stage2.iterations;
    return out;
}

}  // namespace lgr
