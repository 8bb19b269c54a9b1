// cavity_qed.hpp: resonator / spin-ensemble coupling budget, polaritons and transmission maps

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <exception>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace lgr {

namespace si {
inline constexpr double mu0 = 1.25663706212e-6;    // N/A^2 (CODATA 2018)
inline constexpr double planck = 6.62607015e-34;   // J s, exact
}  // namespace si

// Single cavity mode. All rates are ordinary-frequency MHz (energy-decay FWHM).
struct ResonatorMode {
    double omega_r = 0.0;
    double kappa_int = 0.0;
    double kappa_ext1 = 0.0;
    double kappa_ext2 = 0.0;

    double kappa() const { return kappa_int + kappa_ext1 + kappa_ext2; }

    void validate() const {
        if (!std::isfinite(omega_r)) throw std::invalid_argument("ResonatorMode: omega_r must be finite");
        if (kappa_int < 0.0 || kappa_ext1 < 0.0 || kappa_ext2 < 0.0)
            throw std::invalid_argument("ResonatorMode: decay rates must be non-negative");
        if (!(kappa() > 0.0)) throw std::invalid_argument("ResonatorMode: total decay rate must be positive");
    }

    // Per-port external Qs; an infinite Q means the port is decoupled.
    static ResonatorMode from_q(double omega_r, double q_int, double q_ext1, double q_ext2) {
        auto rate = [&](double q) {
            if (!(q > 0.0)) throw std::invalid_argument("quality factors must be positive");
            return std::isinf(q) ? 0.0 : omega_r / q;
        };
        ResonatorMode m{omega_r, rate(q_int), rate(q_ext1), rate(q_ext2)};
        m.validate();
        return m;
    }
};

struct SpinLine {
    double omega_s = 0.0;  // MHz
    double gamma = 5.0;    // MHz FWHM
    double g_ens = 0.0;    // MHz

    void validate() const {
        if (!(gamma > 0.0)) throw std::invalid_argument("SpinLine: gamma must be positive");
        if (g_ens < 0.0) throw std::invalid_argument("SpinLine: g_ens must be non-negative");
    }
};

struct EnsembleSpec {
    double density_ppm = 0.0;
    double volume_mm3 = 0.0;
    double orientation_fraction = 1.0;
    double nuclear_fraction = 1.0;
    double filling_factor = 1.0;

    void validate() const {
        auto frac = [](double f, const char* name) {
            if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument(std::string("EnsembleSpec: ") + name + " must lie in [0, 1]");
        };
        if (!(density_ppm >= 0.0)) throw std::invalid_argument("EnsembleSpec: density_ppm must be non-negative");
        if (!(volume_mm3 >= 0.0)) throw std::invalid_argument("EnsembleSpec: volume must be non-negative");
        frac(orientation_fraction, "orientation_fraction");
        frac(nuclear_fraction, "nuclear_fraction");
        frac(filling_factor, "filling_factor");
    }
};

// Complex S21 on a (B, omega) grid, row-major with one row per field point.
struct SpectrumMap {
    std::vector<double> b_axis;      // mT
    std::vector<double> omega_axis;  // MHz
    std::vector<std::complex<double>> values;

    std::size_t rows() const { return b_axis.size(); }
    std::size_t cols() const { return omega_axis.size(); }
    std::complex<double>& at(std::size_t ib, std::size_t iw) { return values[ib * cols() + iw]; }
    const std::complex<double>& at(std::size_t ib, std::size_t iw) const { return values[ib * cols() + iw]; }

    std::vector<double> magnitude_row(std::size_t ib) const {
        std::vector<double> out(cols());
        for (std::size_t j = 0; j < cols(); ++j) out[j] = std::abs(at(ib, j));
        return out;
    }
};

inline void require_strictly_monotone(std::span<const double> axis, const char* name) {
    if (axis.size() < 2) return;
    const bool up = axis[1] > axis[0];
    for (std::size_t k = 1; k < axis.size(); ++k) {
        const bool ok = up ? axis[k] > axis[k - 1] : axis[k] < axis[k - 1];
        if (!ok) throw std::invalid_argument(std::string(name) + " must be strictly monotone");
    }
}

// r.m.s. vacuum magnetic field in pT for a mode at omega_r (MHz) with volume mode_volume (mm^3).
inline double vacuum_brms(double omega_r, double mode_volume) {
    if (!(omega_r > 0.0) || !(mode_volume > 0.0))
        throw std::invalid_argument("vacuum_brms: frequency and mode volume must be positive");
    const double f = omega_r * 1e6;
    const double v = mode_volume * 1e-9;
    return std::sqrt(si::mu0 * si::planck * f / (2.0 * v)) * 1e12;
}

// Mode volume (mm^3) that yields b_rms (pT) at omega_r (MHz).
inline double mode_volume_for_brms(double omega_r, double b_rms) {
    if (!(omega_r > 0.0) || !(b_rms > 0.0)) throw std::invalid_argument("mode_volume_for_brms: inputs must be positive");
    const double b = b_rms * 1e-12;
    return si::mu0 * si::planck * omega_r * 1e6 / (2.0 * b * b) * 1e9;
}

// Single-spin coupling in Hz. gamma_e in MHz/mT equals 1e9 Hz/T.
inline double single_spin_coupling(double b_rms, double gamma_e, double transition_weight) {
    if (transition_weight < 0.0) throw std::invalid_argument("single_spin_coupling: negative transition weight");
    return gamma_e * 1e9 * b_rms * 1e-12 * std::sqrt(transition_weight);
}

inline constexpr double diamond_lattice_constant_nm = 0.3567;

// Carbon sites per cm^3 (8 per conventional cubic cell).
inline double carbon_site_density_cm3() {
    const double a_cm = diamond_lattice_constant_nm * 1e-7;
    return 8.0 / (a_cm * a_cm * a_cm);
}

// Number of spins participating in one transition. The filling factor is applied here so that
// g_ens picks up sqrt(filling).
inline double effective_spin_count(const EnsembleSpec& spec) {
    spec.validate();
    const double volume_cm3 = spec.volume_mm3 * 1e-3;
    return carbon_site_density_cm3() * volume_cm3 * spec.density_ppm * 1e-6 * spec.orientation_fraction *
           spec.nuclear_fraction * spec.filling_factor;
}

// Collective coupling in MHz from a single-spin coupling in Hz.
inline double ensemble_coupling(double g_single, double n) {
    if (n < 0.0) throw std::invalid_argument("ensemble_coupling: spin count must be non-negative");
    return g_single * std::sqrt(n) * 1e-6;
}

struct PolaritonPair {
    double omega_minus = 0.0;
    double omega_plus = 0.0;
    double splitting() const { return omega_plus - omega_minus; }
};

inline PolaritonPair polariton_frequencies(double omega_r, double omega_s, double g_ens) {
    if (g_ens < 0.0) throw std::invalid_argument("polariton_frequencies: g_ens must be non-negative");
    const double mean = 0.5 * (omega_r + omega_s);
    const double half_detuning = 0.5 * (omega_r - omega_s);
    const double root = std::hypot(g_ens, half_detuning);
    return {mean - root, mean + root};
}

// Single-frequency input-output transmission.
inline std::complex<double> s21_at(double omega, const ResonatorMode& res, std::span<const SpinLine> lines) {
    const std::complex<double> i{0.0, 1.0};
    std::complex<double> denom = i * (omega - res.omega_r) + 0.5 * res.kappa();
    for (const auto& l : lines) denom += l.g_ens * l.g_ens / (i * (omega - l.omega_s) + 0.5 * l.gamma);
    return std::sqrt(res.kappa_ext1 * res.kappa_ext2) / denom;
}

inline std::vector<std::complex<double>> s21_spectrum(std::span<const double> omega_grid, const ResonatorMode& res,
                                                      std::span<const SpinLine> lines) {
    if (omega_grid.empty()) throw std::invalid_argument("s21_spectrum: empty frequency grid");
    res.validate();
    for (const auto& l : lines) l.validate();
    std::vector<std::complex<double>> out(omega_grid.size());
    for (std::size_t k = 0; k < omega_grid.size(); ++k) out[k] = s21_at(omega_grid[k], res, lines);
    return out;
}

// Evaluates rows in parallel when threads > 1. Each row is written by exactly one worker, so the
// output is bit-identical to the serial result.
inline SpectrumMap s21_map(std::span<const double> b_grid, std::span<const double> omega_grid, const ResonatorMode& res,
                           std::span<const std::vector<SpinLine>> transition_curves, unsigned threads = 1) {
    if (b_grid.size() != transition_curves.size())
        throw std::invalid_argument("s21_map: field grid has " + std::to_string(b_grid.size()) + " points but " +
                                    std::to_string(transition_curves.size()) + " line sets were supplied");
    if (b_grid.empty() || omega_grid.empty()) throw std::invalid_argument("s21_map: empty grid");
    require_strictly_monotone(b_grid, "field axis");
    require_strictly_monotone(omega_grid, "frequency axis");
    res.validate();

    SpectrumMap map;
    map.b_axis.assign(b_grid.begin(), b_grid.end());
    map.omega_axis.assign(omega_grid.begin(), omega_grid.end());
    map.values.resize(b_grid.size() * omega_grid.size());

    auto fill_row = [&](std::size_t ib) {
        const auto& lines = transition_curves[ib];
        for (const auto& l : lines) l.validate();
        for (std::size_t j = 0; j < omega_grid.size(); ++j) map.at(ib, j) = s21_at(omega_grid[j], res, lines);
    };

    const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(b_grid.size())));
    if (n_threads == 1) {
        for (std::size_t ib = 0; ib < b_grid.size(); ++ib) fill_row(ib);
        return map;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t ib = t; ib < b_grid.size(); ib += n_threads) fill_row(ib);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return map;
}

// Field (mT) where curve(B) = omega_r inside [lo, hi], by bisection.
inline double crossing_field(const std::function<double(double)>& curve, double omega_r, double lo, double hi,
                             double tolerance = 1e-3) {
    if (!(lo < hi)) throw std::invalid_argument("crossing_field: bracket must satisfy lo < hi");
    double f_lo = curve(lo) - omega_r;
    const double f_hi = curve(hi) - omega_r;
    if (f_lo == 0.0) return lo;
    if (f_hi == 0.0) return hi;
    if ((f_lo > 0.0) == (f_hi > 0.0))
        throw std::domain_error("crossing_field: no sign change of the transition curve relative to omega_r in [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "] mT");
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = curve(mid) - omega_r;
        if (f_mid == 0.0) return mid;
        if ((f_mid > 0.0) == (f_lo > 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace lgr
