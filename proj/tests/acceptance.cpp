// Acceptance checks: one PASS/FAIL line per criterion. `acceptance --criterion N` runs one of them.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "lgr/experiment.hpp"

using namespace lgr;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

ExperimentConfig load(const std::string& name) {
    std::ifstream in(std::string(LGR_CONFIG_DIR) + "/" + name);
    if (!in) throw std::runtime_error("cannot open config " + name);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << std::fixed << v;
    return os.str();
}

double report_entry(const Report& r, const std::string& key) {
    for (const auto& [k, v] : r.entries)
        if (k == key) return std::stod(v);
    throw std::runtime_error("report has no key " + key);
}

bool within(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

// Smallest distance between the two strongest local maxima of |S21| over all field columns.
double min_peak_splitting(const SpectrumMap& map) {
    double best = INFINITY;
    for (std::size_t ib = 0; ib < map.rows(); ++ib) {
        const auto m = map.magnitude_row(ib);
        std::vector<std::pair<double, double>> peaks;  // (height, refined frequency)
        for (std::size_t j = 1; j + 1 < m.size(); ++j) {
            if (!(m[j] > m[j - 1] && m[j] >= m[j + 1])) continue;
            const double den = m[j - 1] - 2.0 * m[j] + m[j + 1];
            const double shift = den != 0.0 ? 0.5 * (m[j - 1] - m[j + 1]) / den : 0.0;
            peaks.emplace_back(m[j], map.omega_axis[j] + shift * (map.omega_axis[j + 1] - map.omega_axis[j]));
        }
        if (peaks.size() < 2) continue;
        std::partial_sort(peaks.begin(), peaks.begin() + 2, peaks.end(), std::greater<>());
        best = std::min(best, std::abs(peaks[0].second - peaks[1].second));
    }
    return best;
}

Outcome criterion_nv_crossing() {
    const auto cfg = load("sample1_nv.ini");
    const Setup s = make_setup(cfg);
    const double b = line_crossing(s, 0);
    return {std::abs(b - 73.7) <= 1.5, "NV |0>-|2> crossing at " + fmt(b, 3) + " mT for omega_r = " +
                                           fmt(s.resonator.omega_r, 1) + " MHz, B || [110] (target 73.7 +/- 1.5 mT)"};
}

Outcome criterion_polariton_splitting() {
    const auto cfg = load("sample1_nv.ini");
    const double g = cfg.sample.g_ens_mhz.at(0);
    const auto map = synthetic_map(cfg);
    const double split = min_peak_splitting(map);
    const auto clean = fit_avoided_crossing(map);
    double peak = 0.0;
    for (const auto& v : map.values) peak = std::max(peak, std::abs(v));
    auto noisy = map;
    add_magnitude_noise(noisy.values, 0.01 * peak, cfg.seed + 1);
    const auto rough = fit_avoided_crossing(noisy);
    const bool ok = std::abs(split - 23.0) <= 0.5 && clean.converged && within(clean.at("g_ens"), g, 0.02) &&
                    rough.converged && within(rough.at("g_ens"), g, 0.05);
    return {ok, "minimum splitting " + fmt(split, 3) + " MHz (23.0 +/- 0.5); fitted g_ens " + fmt(clean.at("g_ens")) +
                    " MHz noiseless, " + fmt(rough.at("g_ens")) + " MHz at 1% noise (configured " + fmt(g, 2) + ")"};
}

Outcome criterion_p1_triplet() {
    const auto cfg = load("sample2_p1.ini");
    const Setup s = make_setup(cfg);
    std::vector<double> b;
    for (std::size_t k = 0; k < 3; ++k) b.push_back(line_crossing(s, k));
    bool ok = b.size() == 3 && std::abs(b[0] - 188.7) <= 2.0;
    for (std::size_t k = 0; k + 1 < b.size(); ++k) {
        const double d = b[k + 1] - b[k];
        ok = ok && d >= 3.0 && d <= 4.5;
    }
    FitRequest req;
    req.config = cfg;
    const auto r = run_fit(req);
    const std::array<std::string, 3> tags{"mIp1", "mI0", "mIm1"};
    std::string fitted;
    for (std::size_t k = 0; k < 3; ++k) {
        const double g = report_entry(r, tags[k] + ".g_ens_mhz");
        ok = ok && within(g, cfg.sample.g_ens_mhz.at(k), 0.03);
        fitted += (k ? "/" : "") + fmt(g, 3);
    }
    ok = ok && r.converged;
    return {ok, "crossings " + fmt(b[0], 3) + ", " + fmt(b[1], 3) + ", " + fmt(b[2], 3) + " mT; fitted g_ens " + fitted +
                    " MHz (configured 8.8/7.9/7.8)"};
}

Outcome criterion_coupling_budget() {
    const auto cfg = load("sample1_nv.ini");
    const Setup s = make_setup(cfg);
    const auto budget = coupling_budget(cfg, s);
    const double weight = budget.lines.at(0).weight;
    const double g1 = single_spin_coupling(14.0, 28.0, weight);
    const double g_ens = budget.lines.at(0).g_ens_mhz;
    const double measured = cfg.sample.g_ens_mhz.at(0);
    const bool ok = g1 >= 0.15 && g1 <= 0.4 && g_ens >= 0.5 * measured && g_ens <= 2.0 * measured;
    return {ok, "single-spin g " + fmt(g1, 4) + " Hz at 14 pT (weight " + fmt(weight, 4) + "); budget g_ens " +
                    fmt(g_ens, 2) + " MHz vs measured " + fmt(measured, 2) + " MHz"};
}

Outcome criterion_q_round_trip() {
    bool ok = true;
    std::string detail;
    auto trace = [](const CircuitElements& e, double f0) {
        const auto w = linear_grid(f0 - 50.0, f0 + 50.0, 2001);
        return magnitude_spectrum(w, loop_gap_s21(w, e));
    };
    for (const double target : {3500.0, 85000.0}) {
        CircuitElements e = design_tank(5390.0, 1300.0, 0.1);
        e.cc1_ff = e.cc2_ff = coupling_for_q_ext(e, target);
        const auto truth = q_decomposition(e);
        const auto m = measure_q(trace(e, truth.omega_0));
        ok = ok && within(m.q.q_loaded, truth.q_loaded(), 0.01) && within(m.q.q_ext, target, 0.01);
        detail += "Q_ext " + fmt(target, 0) + ": fitted Q_L " + fmt(m.q.q_loaded, 1) + " (model " + fmt(truth.q_loaded(), 1) +
                  "), Q_ext " + fmt(m.q.q_ext, 0) + "; ";
    }
    double worst = 0.0;
    for (double cc = 2.0; cc <= 40.0; cc += 2.0) {
        CircuitElements e = design_tank(5390.0, 1300.0, 0.1);
        e.cc1_ff = e.cc2_ff = cc;
        const auto truth = q_decomposition(e);
        const auto m = measure_q(trace(e, truth.omega_0));
        worst = std::max(worst, std::abs(m.q.q_ext / truth.q_ext() - 1.0));
    }
    ok = ok && worst <= 0.05;
    return {ok, detail + "worst Q_ext disagreement over cc sweep " + fmt(100.0 * worst, 2) + "%"};
}

// --- property suites ------------------------------------------------------------------

std::vector<double> tavis_cummings_single_excitation(double omega_r, double omega_s, double g, int n, int cutoff) {
    const int np = cutoff + 1;
    const int dim = np << n;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    auto index = [&](int photons, int spins) { return photons * (1 << n) + spins; };
    for (int p = 0; p < np; ++p)
        for (int s = 0; s < (1 << n); ++s) {
            const int i = index(p, s);
            h(i, i) = omega_r * p + omega_s * __builtin_popcount(static_cast<unsigned>(s));
            for (int k = 0; k < n; ++k)
                if (!(s & (1 << k)) && p > 0) {
                    const int j = index(p - 1, s | (1 << k));
                    h(j, i) = h(i, j) = g * std::sqrt(static_cast<double>(p));
                }
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    std::vector<double> out;
    for (int k = 0; k < dim; ++k) {
        double exc = 0.0;
        for (int p = 0; p < np; ++p)
            for (int s = 0; s < (1 << n); ++s) {
                const double a = es.eigenvectors()(index(p, s), k);
                exc += a * a * (p + __builtin_popcount(static_cast<unsigned>(s)));
            }
        if (std::abs(exc - 1.0) < 1e-9) out.push_back(es.eigenvalues()[k]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    return Vec3(n(rng), n(rng), n(rng)).normalized();
}

Outcome criterion_properties() {
    std::vector<std::string> failed;
    auto check = [&](bool ok, const char* name) {
        if (!ok && (failed.empty() || failed.back() != name)) failed.emplace_back(name);
    };
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    for (int t = 0; t < 12; ++t) {
        const SpinModel model = t % 2 ? SpinModel{P1Model{}} : SpinModel{NVModel{}};
        const Vec3 dir = random_unit(rng), axis = random_unit(rng);
        const double b = 5.0 + 250.0 * u(rng);
        const auto h = build_hamiltonian(model, b * dir, axis);
        check(hermiticity_defect(h.matrix()) < 1e-12, "hermiticity");
        const auto eig = eigensystem(h);
        const ComplexMatrix rebuilt = eig.vectors * eig.values.cast<Complex>().asDiagonal() * eig.vectors.adjoint();
        check((rebuilt - h.matrix()).cwiseAbs().maxCoeff() < 1e-9, "eigen-reconstruction");

        // Hellmann-Feynman against central differences on well-separated levels
        const double step = 1e-3;
        const auto up = eigensystem(build_hamiltonian(model, (b + step) * dir, axis));
        const auto dn = eigensystem(build_hamiltonian(model, (b - step) * dir, axis));
        const auto dh = zeeman_derivative(model, dir, axis);
        const auto n = eig.values.size();
        for (Eigen::Index k = 0; k < n; ++k) {
            const double gap = std::min(k > 0 ? eig.values[k] - eig.values[k - 1] : 1e9,
                                        k + 1 < n ? eig.values[k + 1] - eig.values[k] : 1e9);
            if (gap < 0.1) continue;
            const auto v = eig.vectors.col(k);
            const double hf = v.dot(dh.matrix() * v).real();
            const double fd = (up.values[k] - dn.values[k]) / (2.0 * step);
            check(std::abs(hf - fd) <= 1e-6 * std::max(1.0, std::abs(fd)), "Hellmann-Feynman");
        }

        const Eigen::Matrix3d r = Eigen::AngleAxisd(2.0 * M_PI * u(rng), random_unit(rng)).toRotationMatrix();
        const auto rotated = eigensystem(build_hamiltonian(model, r * (b * dir), (r * axis).normalized()));
        check((rotated.values - eig.values).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, eig.values.cwiseAbs().maxCoeff()),
              "rotational covariance");

        // sum over all pairs of |<f|S.n|i>|^2 is Tr((S.n)^2) = (2I+1) s(s+1)(2s+1)/3
        const auto drive = electron_drive(electron_spin(model), spin_one, random_unit(rng));
        std::vector<std::size_t> all(static_cast<std::size_t>(n));
        std::iota(all.begin(), all.end(), std::size_t{0});
        double total = 0.0;
        for (const auto& l : transition_spectrum(eig, drive, all, 0.0)) total += l.weight;
        const ComplexMatrix m = eig.vectors.adjoint() * drive.matrix() * eig.vectors;
        for (Eigen::Index k = 0; k < n; ++k) total += std::norm(m(k, k));
        const double s = electron_spin(model).value();
        check(std::abs(total - 3.0 * s * (s + 1.0) * (2.0 * s + 1.0) / 3.0) < 1e-9, "transition-weight sum rule");
    }

    for (int t = 0; t < 50; ++t) {
        const double wr = 5390.0 + 40.0 * (u(rng) - 0.5), ws = 5390.0 + 40.0 * (u(rng) - 0.5), g = 20.0 * u(rng);
        const auto p = polariton_frequencies(wr, ws, g);
        check(std::abs(p.omega_plus + p.omega_minus - wr - ws) < 1e-9 && p.splitting() >= 2.0 * g - 1e-12,
              "polariton sum rule");
    }

    for (int t = 0; t < 20; ++t) {
        CircuitElements e = design_tank(5390.0, 1300.0, 0.1);
        e.r_ohm *= 0.2 + u(rng);
        e.cc1_ff = 60.0 * u(rng);
        e.cc2_ff = 60.0 * u(rng);
        e.cx_ff = 10.0 * u(rng);
        for (const double f : linear_grid(5200.0, 5600.0, 41)) {
            const auto sm = loop_gap_s(f, e);
            check(std::abs(sm(1, 0) - sm(0, 1)) < 1e-12, "S-matrix reciprocity");
            check(std::norm(sm(0, 0)) + std::norm(sm(1, 0)) <= 1.0 + 1e-12, "S-matrix passivity");
        }
    }

    for (const double cc : {4.0, 12.0, 27.0}) {
        CircuitElements e = design_tank(5390.0, 1300.0, 0.1);
        e.cc1_ff = e.cc2_ff = cc;
        const auto q = q_decomposition(e);
        const auto w = linear_grid(q.omega_0 - 25.0, q.omega_0 + 25.0, 50001);
        std::vector<double> p(w.size());
        for (std::size_t k = 0; k < w.size(); ++k) p[k] = std::norm(loop_gap_s(w[k], e)(1, 0));
        const auto top = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        std::size_t l = top, r = top;
        while (l > 0 && p[l] > 0.5 * p[top]) --l;
        while (r + 1 < p.size() && p[r] > 0.5 * p[top]) ++r;
        check(within(w[top] / (w[r] - w[l]), q.q_loaded(), 0.02), "loaded-Q composition");
    }

    for (int n = 1; n <= 3; ++n) {
        const auto exact = tavis_cummings_single_excitation(5390.0, 5386.0, 0.8, n, 3);
        const auto p = polariton_frequencies(5390.0, 5386.0, 0.8 * std::sqrt(static_cast<double>(n)));
        check(exact.size() == static_cast<std::size_t>(n + 1) && within(exact.front(), p.omega_minus, 1e-6) &&
                  within(exact.back(), p.omega_plus, 1e-6),
              "Tavis-Cummings oracle");
    }

    {
        Spectrum1D s{linear_grid(5370.0, 5410.0, 401), {}};
        for (double w : s.omega) s.magnitude.push_back(0.01 + 0.8 * 4.41 / ((w - 5390.3) * (w - 5390.3) + 4.41));
        add_magnitude_noise(s.magnitude, 0.01, 3);
        const auto a = fit_lorentzian(s), b = fit_lorentzian(s);
        check(a.params == b.params, "fit determinism");
        auto shifted = s;
        for (double& w : shifted.omega) w += 1234.5;
        const auto c = fit_lorentzian(shifted);
        check(std::abs(c.at("center") - a.at("center") - 1234.5) < 1e-6 && std::abs(c.at("fwhm") - a.at("fwhm")) < 1e-6,
              "axis-translation invariance");

        auto cfg = load("sample1_nv.ini");
        cfg.sweep.b_points = 81;
        cfg.sweep.omega_points = 251;
        auto map = synthetic_map(cfg);
        const auto f1 = fit_avoided_crossing(map), f2 = fit_avoided_crossing(map);
        check(f1.params == f2.params, "fit determinism");
        for (double& b : map.b_axis) b += 10.0;
        for (double& w : map.omega_axis) w -= 300.0;
        const auto f3 = fit_avoided_crossing(map);
        check(std::abs(f3.at("g_ens") - f1.at("g_ens")) < 1e-6 && std::abs(f3.at("b_star") - f1.at("b_star") - 10.0) < 1e-6 &&
                  std::abs(f3.at("omega_r") - f1.at("omega_r") + 300.0) < 1e-6,
              "axis-translation invariance");
    }

    std::string detail = "hermiticity, reconstruction, Hellmann-Feynman, covariance, sum rules, reciprocity, "
                         "passivity, loaded Q, Tavis-Cummings, determinism, translation invariance";
    if (!failed.empty()) {
        detail = "failed:";
        for (const auto& f : failed) detail += " [" + f + "]";
    }
    return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion_nv_crossing,     criterion_polariton_splitting,
                                                         criterion_p1_triplet,      criterion_coupling_budget,
                                                         criterion_q_round_trip,    criterion_properties};
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc) {
            selected.push_back(std::atoi(argv[++i]));
        } else {
            std::cerr << "usage: acceptance [--criterion N]...\n";
            return 2;
        }
    }
    if (selected.empty())
        for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);

    bool all = true;
    for (const int k : selected) {
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::cerr << "no criterion " << k << "\n";
            return 2;
        }
        Outcome o;
        try {
            o = criteria[static_cast<std::size_t>(k - 1)]();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << ": " << o.detail << "\n";
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
