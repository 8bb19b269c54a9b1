// experiment.hpp: config-driven experiments behind the lgr command-line tool

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lgr/cavity_qed.hpp"
#include "lgr/circuit_model.hpp"
#include "lgr/config.hpp"
#include "lgr/csv.hpp"
#include "lgr/fitting.hpp"
#include "lgr/spin_models.hpp"

namespace lgr {

inline std::vector<double> linear_grid(double lo, double hi, int n) {
    if (n < 2) throw std::invalid_argument("grids need at least 2 points");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) g[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (n - 1);
    return g;
}

inline Vec3 miller_vector(const MillerIndex& m) { return Vec3(m[0], m[1], m[2]).normalized(); }

// Everything the forward model needs, resolved from a config.
struct Setup {
    Defect defect = Defect::nv;
    SpinModel model = NVModel{};
    Vec3 b_direction = Vec3::UnitZ();
    Vec3 axis = Vec3::UnitZ();
    Vec3 ac_direction = Vec3::UnitX();
    double orientation_fraction = 1.0;
    double nuclear_fraction = 1.0;
    ResonatorMode resonator;
    std::vector<int> labels;  // m_I of each spin line (NV: one merged line)

    std::size_t line_count() const { return labels.size(); }
};

namespace detail {

// Bonds sharing the largest |cos| with the field form the default sub-ensemble.
inline std::pair<Vec3, int> default_axis(const Vec3& b) {
    const auto bonds = bond_orientations();
    std::size_t best = 0;
    for (std::size_t k = 1; k < bonds.size(); ++k)
        if (std::abs(bonds[k].dot(b)) > std::abs(bonds[best].dot(b)) + 1e-12) best = k;
    int count = 0;
    for (const auto& v : bonds) count += std::abs(std::abs(v.dot(b)) - std::abs(bonds[best].dot(b))) < 1e-9;
    return {bonds[best], count};
}

inline int equivalent_bonds(const Vec3& b, const Vec3& axis) {
    int count = 0;
    for (const auto& v : bond_orientations()) count += std::abs(std::abs(v.dot(b)) - std::abs(axis.dot(b))) < 1e-9;
    return std::max(count, 1);
}

inline CircuitElements crosstalk_free(CircuitElements e) {
    e.cx_ff = 0.0;
    return e;
}

}  // namespace detail

inline ResonatorMode resonator_mode(const ResonatorConfig& r) {
    if (r.circuit) {
        const auto q = q_decomposition(detail::crosstalk_free(*r.circuit));
        return ResonatorMode::from_q(q.omega_0, q.q_int, q.q_ext1, q.q_ext2);
    }
    return ResonatorMode::from_q(r.omega_r_mhz, r.q_int, r.q_ext1, r.q_ext2);
}

inline Setup make_setup(const ExperimentConfig& cfg) {
    Setup s;
    s.defect = cfg.sample.defect;
    if (s.defect == Defect::nv) {
        s.model = NVModel{};
        s.labels = {0};
    } else {
        s.model = P1Model{};
        s.labels = {1, 0, -1};
    }
    s.b_direction = miller_vector(cfg.sample.field_direction);
    int equivalent = 1;
    if (cfg.sample.axis) {
        s.axis = miller_vector(*cfg.sample.axis);
        equivalent = detail::equivalent_bonds(s.b_direction, s.axis);
    } else {
        std::tie(s.axis, equivalent) = detail::default_axis(s.b_direction);
    }
    s.ac_direction = cfg.sample.ac_direction ? miller_vector(*cfg.sample.ac_direction) : default_ac_direction(s.b_direction);
    s.orientation_fraction = cfg.sample.orientation_fraction.value_or(equivalent / 4.0);
    s.nuclear_fraction = cfg.sample.nuclear_fraction.value_or(s.defect == Defect::nv ? 1.0 : 1.0 / 3.0);
    s.resonator = resonator_mode(cfg.resonator);
    return s;
}

// Spin-line frequencies at field b (mT), ordered like Setup::labels.
inline std::vector<double> line_frequencies(const Setup& s, double b) {
    const Vec3 field = b * s.b_direction;
    if (s.defect == Defect::nv) return {nv_transition_frequency(field, s.axis, std::get<NVModel>(s.model).params)};
    const auto lines = p1_nuclear_conserving_lines(field, s.axis, std::get<P1Model>(s.model).params, s.ac_direction);
    return {lines[0].line.freq, lines[1].line.freq, lines[2].line.freq};
}

// Squared drive matrix elements of each line at field b.
inline std::vector<double> line_weights(const Setup& s, double b) {
    const Vec3 field = b * s.b_direction;
    if (s.defect == Defect::nv) {
        const auto eig = eigensystem(build_hamiltonian(s.model, field, s.axis));
        return {manifold_transition_weight(eig, lab_electron_drive(s.model, s.ac_direction, s.axis), 0, 2, 3)};
    }
    const auto lines = p1_nuclear_conserving_lines(field, s.axis, std::get<P1Model>(s.model).params, s.ac_direction);
    return {lines[0].line.weight, lines[1].line.weight, lines[2].line.weight};
}

inline double line_crossing(const Setup& s, std::size_t line, double lo = 1e-3, double hi = 1000.0) {
    return crossing_field([&](double b) { return line_frequencies(s, b)[line]; }, s.resonator.omega_r, lo, hi);
}

struct LineBudget {
    int m_i = 0;
    double crossing_mt = 0.0;
    double weight = 0.0;
    double g_single_hz = 0.0;
    double g_ens_mhz = 0.0;
};

struct CouplingBudget {
    double omega_r_mhz = 0.0;
    double mode_volume_mm3 = 0.0;
    double b_rms_pt = 0.0;
    double gamma_e = 0.0;
    EnsembleSpec ensemble;
    double site_density_cm3 = 0.0;
    double n_spins = 0.0;
    std::vector<LineBudget> lines;
};

inline CouplingBudget coupling_budget(const ExperimentConfig& cfg, const Setup& s) {
    CouplingBudget out;
    out.omega_r_mhz = s.resonator.omega_r;
    if (cfg.resonator.b_rms_pt) {
        out.b_rms_pt = *cfg.resonator.b_rms_pt;
        out.mode_volume_mm3 = mode_volume_for_brms(out.omega_r_mhz, out.b_rms_pt);
    } else {
        out.mode_volume_mm3 = cfg.resonator.mode_volume_mm3;
        out.b_rms_pt = vacuum_brms(out.omega_r_mhz, out.mode_volume_mm3);
    }
    out.gamma_e = gamma_e(s.model);
    out.ensemble = {cfg.sample.density_ppm, cfg.sample.volume_mm3, s.orientation_fraction, s.nuclear_fraction,
                    cfg.sample.filling_factor};
    out.site_density_cm3 = carbon_site_density_cm3();
    out.n_spins = effective_spin_count(out.ensemble);
    for (std::size_t k = 0; k < s.line_count(); ++k) {
        LineBudget lb;
        lb.m_i = s.labels[k];
        lb.crossing_mt = line_crossing(s, k);
        lb.weight = line_weights(s, lb.crossing_mt)[k];
        lb.g_single_hz = single_spin_coupling(out.b_rms_pt, out.gamma_e, lb.weight);
        lb.g_ens_mhz = ensemble_coupling(lb.g_single_hz, out.n_spins);
        out.lines.push_back(lb);
    }
    return out;
}

// Per-line ensemble couplings used in maps: measured values when configured, else the budget.
inline std::vector<double> map_couplings(const ExperimentConfig& cfg, const Setup& s) {
    if (!cfg.sample.g_ens_mhz.empty()) return cfg.sample.g_ens_mhz;
    std::vector<double> g;
    for (const auto& l : coupling_budget(cfg, s).lines) g.push_back(l.g_ens_mhz);
    return g;
}

inline SpectrumMap synthetic_map(const ExperimentConfig& cfg, unsigned threads = 1) {
    const Setup s = make_setup(cfg);
    const auto g = map_couplings(cfg, s);
    const auto b = linear_grid(cfg.sweep.b_min_mt, cfg.sweep.b_max_mt, cfg.sweep.b_points);
    const auto w = linear_grid(cfg.sweep.omega_min_mhz, cfg.sweep.omega_max_mhz, cfg.sweep.omega_points);
    std::vector<std::vector<SpinLine>> curves;
    curves.reserve(b.size());
    for (double x : b) {
        const auto f = line_frequencies(s, x);
        std::vector<SpinLine> lines;
        for (std::size_t k = 0; k < f.size(); ++k) lines.push_back({f[k], cfg.sample.linewidth_mhz, g[k]});
        curves.push_back(std::move(lines));
    }
    return s21_map(b, w, s.resonator, curves, threads);
}

// Additive Gaussian noise on |S21|; the phase is kept. Magnitudes are clipped at zero.
inline void add_magnitude_noise(std::vector<std::complex<double>>& values, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
    if (sigma == 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : values) v = std::polar(std::max(0.0, std::abs(v) + noise(rng)), std::arg(v));
}

inline void add_magnitude_noise(std::vector<double>& values, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
    if (sigma == 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : values) v = std::max(0.0, v + noise(rng));
}

// Circuit used by the `circuit` command: the configured elements, or a tank designed to match the
// configured resonance and Qs (L fixed at 0.1 nH).
inline CircuitElements circuit_for(const ResonatorConfig& r) {
    if (r.circuit) return *r.circuit;
    CircuitElements e = design_tank(r.omega_r_mhz, r.q_int, 0.1);
    // two equal ports of Q_i combine to Q_i / 2
    e.cc1_ff = coupling_for_q_ext(e, 0.5 * r.q_ext1);
    e.cc2_ff = coupling_for_q_ext(e, 0.5 * r.q_ext2);
    return e;
}

// Bare-resonator transmission on the sweep frequency grid.
inline Spectrum1D synthetic_trace(const ExperimentConfig& cfg) {
    const auto w = linear_grid(cfg.sweep.omega_min_mhz, cfg.sweep.omega_max_mhz, cfg.sweep.omega_points);
    if (cfg.resonator.circuit) return magnitude_spectrum(w, loop_gap_s21(w, *cfg.resonator.circuit));
    return magnitude_spectrum(w, s21_spectrum(w, resonator_mode(cfg.resonator), {}));
}

// ---------------------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------------------

inline void write_levels(std::ostream& os, const ExperimentConfig& cfg) {
    const Setup s = make_setup(cfg);
    const auto b = linear_grid(cfg.sweep.b_min_mt, cfg.sweep.b_max_mt, cfg.sweep.b_points);
    const auto curve = level_curve(s.model, s.b_direction, s.axis, b);
    const auto n = static_cast<std::size_t>(curve.front().values.size());
    std::vector<std::string> header{"B_mT"};
    for (std::size_t k = 0; k < n; ++k) header.push_back("E" + std::to_string(k) + "_MHz");
    CsvWriter out(os, header);
    for (std::size_t i = 0; i < b.size(); ++i) {
        std::vector<double> row{b[i]};
        for (std::size_t k = 0; k < n; ++k) row.push_back(curve[i].values[static_cast<Eigen::Index>(k)]);
        out.row(row);
    }
}

inline std::string line_tag(Defect d, int m_i) {
    if (d == Defect::nv) return "02";
    return m_i > 0 ? "mIp1" : (m_i < 0 ? "mIm1" : "mI0");
}

inline void write_transitions(std::ostream& os, const ExperimentConfig& cfg) {
    const Setup s = make_setup(cfg);
    const auto b = linear_grid(cfg.sweep.b_min_mt, cfg.sweep.b_max_mt, cfg.sweep.b_points);
    std::vector<std::string> header{"B_mT"};
    for (int m : s.labels) {
        header.push_back("f_" + line_tag(s.defect, m) + "_MHz");
        header.push_back("weight_" + line_tag(s.defect, m));
    }
    CsvWriter out(os, header);
    for (double x : b) {
        const auto f = line_frequencies(s, x);
        const auto w = line_weights(s, x);
        std::vector<double> row{x};
        for (std::size_t k = 0; k < f.size(); ++k) {
            row.push_back(f[k]);
            row.push_back(w[k]);
        }
        out.row(row);
    }
}

inline void write_map(std::ostream& os, const SpectrumMap& map) {
    CsvWriter out(os, {"B_mT", "f_MHz", "S21_mag", "S21_phase_rad"});
    for (std::size_t i = 0; i < map.rows(); ++i)
        for (std::size_t j = 0; j < map.cols(); ++j)
            out.row({map.b_axis[i], map.omega_axis[j], std::abs(map.at(i, j)), std::arg(map.at(i, j))});
}

// Rebuilds a B-major long-format map (as written by write_map).
inline SpectrumMap map_from_table(const CsvTable& t) {
    const auto b = t.column("B_mT");
    const auto f = t.column("f_MHz");
    const auto mag = t.column("S21_mag");
    const bool has_phase = t.has_column("S21_phase_rad");
    const auto phase = has_phase ? t.column("S21_phase_rad") : std::vector<double>(b.size(), 0.0);
    if (b.empty()) throw CsvError("map CSV has no data rows");
    std::size_t cols = 0;
    while (cols < b.size() && b[cols] == b[0]) ++cols;
    if (b.size() % cols != 0) throw CsvError("map CSV is not a complete B-major grid");
    SpectrumMap map;
    map.omega_axis.assign(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(cols));
    const std::size_t rows = b.size() / cols;
    for (std::size_t i = 0; i < rows; ++i) {
        map.b_axis.push_back(b[i * cols]);
        for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t k = i * cols + j;
            // +2 for the header row and 1-based counting
            if (b[k] != b[i * cols] || f[k] != map.omega_axis[j])
                throw CsvError("line " + std::to_string(k + 2) + ": map CSV is not a complete B-major grid");
            if (mag[k] < 0.0) throw CsvError("line " + std::to_string(k + 2) + ": negative S21_mag");
            map.values.push_back(std::polar(mag[k], phase[k]));
        }
    }
    require_strictly_monotone(map.b_axis, "field axis");
    require_strictly_monotone(map.omega_axis, "frequency axis");
    return map;
}

inline Spectrum1D trace_from_table(const CsvTable& t) {
    if (t.has_column("B_mT")) {
        const auto b = t.column("B_mT");
        if (std::any_of(b.begin(), b.end(), [&](double x) { return x != b.front(); }))
            throw CsvError("1D fits need a single-field trace; the CSV spans several B_mT values");
    }
    Spectrum1D s{t.column("f_MHz"), t.column("S21_mag")};
    for (std::size_t k = 0; k < s.magnitude.size(); ++k)
        if (s.magnitude[k] < 0.0) throw CsvError("line " + std::to_string(k + 2) + ": negative S21_mag");
    return s;
}

inline void write_circuit(std::ostream& os, const ExperimentConfig& cfg) {
    const CircuitElements e = circuit_for(cfg.resonator);
    const auto w = linear_grid(cfg.sweep.omega_min_mhz, cfg.sweep.omega_max_mhz, cfg.sweep.omega_points);
    e.validate();
    CsvWriter out(os, {"f_MHz", "S21_mag", "S21_phase_rad", "S11_mag"});
    for (double f : w) {
        const auto s = loop_gap_s(f, e);
        out.row({f, std::abs(s(1, 0)), std::arg(s(1, 0)), std::abs(s(0, 0))});
    }
}

// ---------------------------------------------------------------------------------------
// Reports (flat key = value blocks, '#' lines are commentary)
// ---------------------------------------------------------------------------------------

struct Report {
    std::vector<std::string> notes;
    std::vector<std::pair<std::string, std::string>> entries;
    bool converged = true;

    void note(std::string s) { notes.push_back(std::move(s)); }
    void add(std::string key, double v) { entries.emplace_back(std::move(key), format_double(v)); }
    void add(std::string key, std::string v) { entries.emplace_back(std::move(key), std::move(v)); }

    void write(std::ostream& os) const {
        for (const auto& n : notes) os << "# " << n << "\n";
        for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
    }
};

inline Report budget_report(const ExperimentConfig& cfg) {
    const Setup s = make_setup(cfg);
    const auto b = coupling_budget(cfg, s);
    Report r;
    r.note(std::string(to_string(s.defect)) + " coupling budget");
    r.note("B_rms = sqrt(mu0 h f_r / (2 V_m)); g = gamma_e B_rms sqrt(weight); N = n_C V ppm f_orient f_nuc filling; g_ens = g sqrt(N)");
    r.note("field direction [" + detail::miller_text(cfg.sample.field_direction) + "], defect axis (" +
           format_double(s.axis.x()) + ", " + format_double(s.axis.y()) + ", " + format_double(s.axis.z()) + ")");
    r.add("omega_r_mhz", b.omega_r_mhz);
    r.add("mode_volume_mm3", b.mode_volume_mm3);
    r.add("b_rms_pt", b.b_rms_pt);
    r.add("gamma_e_mhz_per_mt", b.gamma_e);
    r.add("site_density_cm3", b.site_density_cm3);
    r.add("density_ppm", b.ensemble.density_ppm);
    r.add("volume_mm3", b.ensemble.volume_mm3);
    r.add("orientation_fraction", b.ensemble.orientation_fraction);
    r.add("nuclear_fraction", b.ensemble.nuclear_fraction);
    r.add("filling_factor", b.ensemble.filling_factor);
    r.add("n_spins", b.n_spins);
    for (const auto& l : b.lines) {
        const std::string p = s.defect == Defect::nv ? "" : line_tag(s.defect, l.m_i) + ".";
        r.add(p + "crossing_field_mt", l.crossing_mt);
        r.add(p + "transition_weight", l.weight);
        r.add(p + "g_single_hz", l.g_single_hz);
        r.add(p + "g_ens_mhz", l.g_ens_mhz);
    }
    return r;
}

inline Report circuit_report(const ExperimentConfig& cfg) {
    const CircuitElements e = circuit_for(cfg.resonator);
    Report r;
    r.note(cfg.resonator.circuit ? "configured loop-gap circuit" : "loop-gap circuit designed from the resonator Qs");
    r.add("l_nh", e.l_nh);
    r.add("c_pf", e.c_pf);
    r.add("r_ohm", e.r_ohm);
    r.add("cc1_ff", e.cc1_ff);
    r.add("cc2_ff", e.cc2_ff);
    r.add("cx_ff", e.cx_ff);
    r.add("z0_ohm", e.z0_ohm);
    if (e.cx_ff != 0.0) r.note("Q decomposition evaluated with the crosstalk path removed");
    const auto q = q_decomposition(detail::crosstalk_free(e));
    r.add("omega_0_mhz", q.omega_0);
    r.add("q_int", q.q_int);
    r.add("q_ext1", q.q_ext1);
    r.add("q_ext2", q.q_ext2);
    r.add("q_ext", q.q_ext());
    r.add("q_loaded", q.q_loaded());
    return r;
}

enum class FitKind { lorentzian, fano, q, crossing };

inline FitKind parse_fit_kind(std::string_view s) {
    if (s == "lorentzian") return FitKind::lorentzian;
    if (s == "fano") return FitKind::fano;
    if (s == "q") return FitKind::q;
    if (s == "crossing") return FitKind::crossing;
    throw std::invalid_argument("unknown fit kind '" + std::string(s) + "' (lorentzian, fano, q, crossing)");
}

struct FitRequest {
    FitKind kind = FitKind::crossing;
    std::optional<CsvTable> input;          // measured data; synthetic from the config otherwise
    std::optional<ExperimentConfig> config;
    std::optional<std::pair<double, double>> b_window;
    bool power = false;  // square |S21| before 1D peak fits
    double noise = 0.0;
    unsigned threads = 1;
};

namespace detail {

inline void add_fit(Report& r, const FitResult& f, const std::string& prefix,
                    const std::vector<std::pair<std::string, std::string>>& names) {
    for (const auto& [param, key] : names)
        if (f.has(param)) r.add(prefix + key, f.at(param));
    r.add(prefix + "residual_rms", f.residual_rms);
    r.add(prefix + "iterations", static_cast<double>(f.iterations));
    r.add(prefix + "converged", std::string(f.converged ? "true" : "false"));
    r.converged = r.converged && f.converged;
}

inline const std::vector<std::pair<std::string, std::string>>& crossing_keys() {
    static const std::vector<std::pair<std::string, std::string>> keys{
        {"g_ens", "g_ens_mhz"}, {"omega_r", "omega_r_mhz"},   {"b_star", "b_star_mt"},
        {"slope", "slope_mhz_per_mt"}, {"kappa", "kappa_mhz"}, {"gamma", "gamma_mhz"},
        {"s21_scale", "s21_scale"}, {"cavity_drift", "cavity_drift_mhz_per_mt"}, {"g_ens_peaks", "g_ens_peaks_mhz"}};
    return keys;
}

}  // namespace detail

inline Report run_fit(const FitRequest& req) {
    if (!req.input && !req.config) throw std::invalid_argument("fit needs an input CSV or a config");
    Report r;
    const std::uint64_t seed = req.config ? req.config->seed : 0;

    if (req.kind == FitKind::crossing) {
        SpectrumMap map;
        if (req.input) {
            map = map_from_table(*req.input);
            r.note("avoided-crossing fit of the input map");
        } else {
            map = synthetic_map(*req.config, req.threads);
            r.note("avoided-crossing fit of the synthetic map");
        }
        add_magnitude_noise(map.values, req.noise, seed);
        std::vector<std::pair<std::string, std::pair<double, double>>> windows;
        if (req.b_window) {
            windows.push_back({"", *req.b_window});
        } else if (req.config && req.config->sample.defect == Defect::p1) {
            // one anticrossing at a time, centred on the predicted crossings
            const Setup s = make_setup(*req.config);
            for (std::size_t k = 0; k < s.line_count(); ++k) {
                const double bc = line_crossing(s, k);
                windows.push_back({line_tag(s.defect, s.labels[k]) + ".", {bc - 1.5, bc + 1.5}});
            }
        } else {
            windows.push_back({"", {map.b_axis.front(), map.b_axis.back()}});
        }
        for (const auto& [prefix, w] : windows) {
            const auto lo = std::min(w.first, w.second), hi = std::max(w.first, w.second);
            const SpectrumMap sub = crop_map(map, lo, hi);
            const std::string label = prefix.empty() ? "" : prefix.substr(0, prefix.size() - 1) + " ";
            r.note(label + "window " + format_double(lo) + " to " +
                   format_double(hi) + " mT, " + std::to_string(sub.rows()) + " field columns");
            detail::add_fit(r, fit_avoided_crossing(sub), prefix, detail::crossing_keys());
        }
        return r;
    }

    Spectrum1D trace = req.input ? trace_from_table(*req.input) : synthetic_trace(*req.config);
    add_magnitude_noise(trace.magnitude, req.noise, seed);
    r.note(std::string(req.input ? "input" : "synthetic") + " trace, " + std::to_string(trace.omega.size()) + " points");
    switch (req.kind) {
        case FitKind::lorentzian: {
            const Spectrum1D y = req.power ? power_spectrum(trace) : trace;
            r.note(req.power ? "Lorentzian fit of |S21|^2" : "Lorentzian fit of |S21|");
            detail::add_fit(r, fit_lorentzian(y), "",
                            {{"center", "center_mhz"}, {"fwhm", "fwhm_mhz"}, {"amplitude", "amplitude"}, {"baseline", "baseline"}});
            break;
        }
        case FitKind::fano: {
            const Spectrum1D y = req.power ? power_spectrum(trace) : trace;
            r.note(req.power ? "Fano fit of |S21|^2" : "Fano fit of |S21|");
            detail::add_fit(r, fit_fano(y), "",
                            {{"center", "center_mhz"}, {"width", "width_mhz"}, {"q_asym", "q_asym"},
                             {"amplitude", "amplitude"}, {"baseline", "baseline"}});
            break;
        }
        case FitKind::q: {
            r.note("Lorentzian fit of |S21|^2; Q_ext = Q_L / |S21|peak, 1/Q_int = 1/Q_L - 1/Q_ext");
            const auto m = measure_q(trace);
            detail::add_fit(r, m.fit, "", {{"center", "center_mhz"}, {"fwhm", "fwhm_mhz"}});
            r.add("peak_s21", m.peak_magnitude);
            r.add("q_loaded", m.q.q_loaded);
            r.add("q_ext", m.q.q_ext);
            r.add("q_int", m.q.q_int);
            break;
        }
        case FitKind::crossing:
            break;
    }
    return r;
}

}  // namespace lgr
