#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "lgr/experiment.hpp"
#include "lgr/fitting.hpp"

using namespace lgr;

namespace {

Spectrum1D lorentzian_trace(double center, double fwhm, double amp, double base, double lo, double hi, int n) {
    Spectrum1D s;
    s.omega = linear_grid(lo, hi, n);
    const double h = 0.5 * fwhm;
    for (double w : s.omega) s.magnitude.push_back(base + amp * h * h / ((w - center) * (w - center) + h * h));
    return s;
}

ExperimentConfig load(const std::string& name) {
    std::ifstream in(std::string(LGR_CONFIG_DIR) + "/" + name);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

double entry(const Report& r, const std::string& key) {
    for (const auto& [k, v] : r.entries)
        if (k == key) return std::stod(v);
    ADD_FAILURE() << "report has no key " << key;
    return NAN;
}

// one spin line sweeping linearly through the resonator at b_star
SpectrumMap linear_crossing_map(double g, double b_star, double slope, int rows = 61, int cols = 301) {
    const ResonatorMode res = ResonatorMode::from_q(5390.0, 1300.0, 8000.0, 8000.0);
    const auto b = linear_grid(b_star - 4.0, b_star + 4.0, rows);
    const auto w = linear_grid(5340.0, 5440.0, cols);
    std::vector<std::vector<SpinLine>> curves;
    for (double x : b) curves.push_back({SpinLine{res.omega_r + slope * (x - b_star), 5.0, g}});
    return s21_map(b, w, res, curves);
}

Spectrum1D circuit_trace(const CircuitElements& e, double half_span, int n) {
    const double f0 = q_decomposition(CircuitElements{e.l_nh, e.c_pf, e.r_ohm, e.cc1_ff, e.cc2_ff, 0.0, e.z0_ohm}).omega_0;
    const auto w = linear_grid(f0 - half_span, f0 + half_span, n);
    return magnitude_spectrum(w, loop_gap_s21(w, e));
}

}  // namespace

TEST(Lorentzian, RoundTrip) {
    const auto s = lorentzian_trace(5390.3, 4.2, 0.8, 0.01, 5370.0, 5410.0, 401);
    const auto f = fit_lorentzian(s);
    ASSERT_TRUE(f.converged);
    EXPECT_NEAR(f.at("center"), 5390.3, 1e-6 * 4.2);
    EXPECT_NEAR(f.at("fwhm"), 4.2, 1e-6 * 4.2);
    EXPECT_NEAR(f.at("amplitude"), 0.8, 1e-6);
    EXPECT_NEAR(f.at("baseline"), 0.01, 1e-6);
    EXPECT_LT(f.residual_rms, 1e-9);
}

TEST(Lorentzian, MonteCarloAtOnePercentNoise) {
    const double fwhm = 4.2;
    const auto clean = lorentzian_trace(5390.0, fwhm, 1.0, 0.0, 5369.0, 5411.0, 201);
    int worst_center = 0, worst_width = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto s = clean;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 0.01);
        for (double& m : s.magnitude) m = std::max(0.0, m + n(rng));
        const auto f = fit_lorentzian(s);
        ASSERT_TRUE(f.converged) << "seed " << seed;
        worst_center += std::abs(f.at("center") - 5390.0) > fwhm / 50.0;
        worst_width += std::abs(f.at("fwhm") - fwhm) > 0.03 * fwhm;
    }
    EXPECT_EQ(worst_center, 0);
    EXPECT_EQ(worst_width, 0);
}

TEST(Lorentzian, ScaleAndTranslationInvariance) {
    const auto s = lorentzian_trace(5390.3, 4.2, 0.8, 0.01, 5370.0, 5410.0, 401);
    const auto ref = fit_lorentzian(s);
    auto scaled = s;
    for (double& m : scaled.magnitude) m *= 37.0;
    const auto fs = fit_lorentzian(scaled);
    EXPECT_NEAR(fs.at("center"), ref.at("center"), 1e-8);
    EXPECT_NEAR(fs.at("fwhm"), ref.at("fwhm"), 1e-8);
    EXPECT_NEAR(fs.at("amplitude"), 37.0 * ref.at("amplitude"), 1e-7);
    auto shifted = s;
    for (double& w : shifted.omega) w -= 2500.0;
    const auto ft = fit_lorentzian(shifted);
    EXPECT_NEAR(ft.at("center"), ref.at("center") - 2500.0, 1e-7);
    EXPECT_NEAR(ft.at("fwhm"), ref.at("fwhm"), 1e-8);
}

TEST(Lorentzian, Deterministic) {
    auto s = lorentzian_trace(5390.3, 4.2, 0.8, 0.01, 5370.0, 5410.0, 401);
    add_magnitude_noise(s.magnitude, 0.02, 5);
    const auto a = fit_lorentzian(s), b = fit_lorentzian(s);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Lorentzian, RejectsUnusableInput) {
    EXPECT_THROW(fit_lorentzian(lorentzian_trace(5390.0, 4.0, 1.0, 0.0, 5380.0, 5400.0, 5)), FitError);
    Spectrum1D flat{linear_grid(0.0, 10.0, 50), std::vector<double>(50, 0.3)};
    EXPECT_THROW(fit_lorentzian(flat), FitError);
    auto swapped = lorentzian_trace(5390.0, 4.0, 1.0, 0.0, 5380.0, 5400.0, 50);
    std::swap(swapped.omega[3], swapped.omega[4]);
    EXPECT_ANY_THROW(fit_lorentzian(swapped));
    auto negative = lorentzian_trace(5390.0, 4.0, 1.0, 0.0, 5380.0, 5400.0, 50);
    negative.magnitude[0] = -1.0;
    EXPECT_ANY_THROW(fit_lorentzian(negative));
}

TEST(Fano, LorentzianHasLargeAsymmetryParameter) {
    const auto f = fit_fano(lorentzian_trace(5390.0, 4.2, 1.0, 0.0, 5370.0, 5410.0, 401));
    ASSERT_TRUE(f.converged);
    EXPECT_GT(std::abs(f.at("q_asym")), 50.0);
    EXPECT_NEAR(f.at("center"), 5390.0, 1e-3);
    EXPECT_NEAR(f.at("width"), 4.2, 1e-3);
    EXPECT_GT(f.at("amplitude"), 0.0);
}

TEST(Fano, RoundTrip) {
    for (const double q : {-3.0, -0.7, 1.5, 4.0}) {
        Spectrum1D s;
        s.omega = linear_grid(5350.0, 5430.0, 801);
        for (double w : s.omega) s.magnitude.push_back(fano_value(w, 5391.0, 6.0, q, 0.9, 0.05));
        const auto f = fit_fano(s);
        ASSERT_TRUE(f.converged) << "q = " << q;
        EXPECT_NEAR(f.at("q_asym"), q, 1e-5 * std::abs(q)) << "q = " << q;
        EXPECT_NEAR(f.at("center"), 5391.0, 1e-5);
        EXPECT_NEAR(f.at("width"), 6.0, 1e-5);
        EXPECT_NEAR(f.at("amplitude"), 0.9, 1e-6);
    }
}

TEST(Fano, PureDip) {
    Spectrum1D s;
    s.omega = linear_grid(5350.0, 5430.0, 801);
    for (double w : s.omega) s.magnitude.push_back(fano_value(w, 5391.0, 6.0, 0.0, 0.9, 0.05));
    const auto f = fit_fano(s);
    ASSERT_TRUE(f.converged);
    EXPECT_LT(std::abs(f.at("q_asym")), 1e-4);
    EXPECT_NEAR(f.at("center"), 5391.0, 1e-5);
    EXPECT_NEAR(f.at("width"), 6.0, 1e-5);
    EXPECT_THROW(fit_lorentzian(s), FitError);
}

TEST(Fano, DescribesCrosstalkLineshape) {
    double last_q = INFINITY;
    for (const double cx : {0.5, 2.0, 5.0}) {
        CircuitElements e = design_tank(5390.0, 1300.0, 0.1);
        e.cc1_ff = e.cc2_ff = 27.0;
        e.cx_ff = cx;
        const auto s = circuit_trace(e, 40.0, 801);
        const double peak = *std::max_element(s.magnitude.begin(), s.magnitude.end());
        const auto fano = fit_fano(s);
        const auto lor = fit_lorentzian(s);
        EXPECT_LT(fano.residual_rms / peak, 0.05) << "cx = " << cx;
        EXPECT_LT(fano.residual_rms, lor.residual_rms) << "cx = " << cx;
        // stronger crosstalk, stronger asymmetry
        EXPECT_LT(std::abs(fano.at("q_asym")), last_q) << "cx = " << cx;
        last_q = std::abs(fano.at("q_asym"));
    }
    EXPECT_LT(last_q, 10.0);
}

TEST(QExtraction, FromFitResult) {
    FitResult f;
    f.params = {{"center", 1000.0}, {"fwhm", 0.5}};
    const auto q = extract_qs(f, 0.5);
    EXPECT_DOUBLE_EQ(q.q_loaded, 2000.0);
    EXPECT_DOUBLE_EQ(q.q_ext, 4000.0);
    EXPECT_DOUBLE_EQ(q.q_int, 4000.0);
    EXPECT_THROW(extract_qs(f, 1.0), std::invalid_argument);
    EXPECT_THROW(extract_qs(f, 0.0), std::invalid_argument);
    f.params[1].second = 0.0;
    EXPECT_THROW(extract_qs(f, 0.5), std::invalid_argument);
}

TEST(QExtraction, MeasuresCircuitQs) {
    for (const double target : {3500.0, 85000.0}) {
        CircuitElements e = design_tank(5390.0, 1300.0, 0.1);
        e.cc1_ff = e.cc2_ff = coupling_for_q_ext(e, target);
        const auto truth = q_decomposition(e);
        const auto m = measure_q(circuit_trace(e, 50.0, 2001));
        EXPECT_NEAR(m.q.q_loaded, truth.q_loaded(), 0.01 * truth.q_loaded()) << target;
        EXPECT_NEAR(m.q.q_ext, truth.q_ext(), 0.01 * truth.q_ext()) << target;
        EXPECT_NEAR(m.q.q_int, truth.q_int, 0.01 * truth.q_int) << target;
    }
}

TEST(QExtraction, TracksCouplingSweep) {
    for (double cc = 5.0; cc <= 40.0; cc += 5.0) {
        CircuitElements e = design_tank(5390.0, 1300.0, 0.1);
        e.cc1_ff = e.cc2_ff = cc;
        const auto truth = q_decomposition(e);
        const auto m = measure_q(circuit_trace(e, 50.0, 2001));
        EXPECT_NEAR(m.q.q_ext, truth.q_ext(), 0.05 * truth.q_ext()) << "cc = " << cc;
    }
}

TEST(AvoidedCrossing, LinearLineRoundTrip) {
    const auto map = linear_crossing_map(11.5, 76.6, 28.0);
    const auto f = fit_avoided_crossing(map);
    ASSERT_TRUE(f.converged);
    EXPECT_NEAR(f.at("g_ens"), 11.5, 1e-6 * 11.5);
    EXPECT_NEAR(f.at("omega_r"), 5390.0, 1e-6);
    EXPECT_NEAR(f.at("b_star"), 76.6, 1e-6);
    EXPECT_NEAR(f.at("slope"), 28.0, 1e-5);
    EXPECT_NEAR(f.at("gamma"), 5.0, 1e-5);
    EXPECT_NEAR(f.at("cavity_drift"), 0.0, 1e-6);
    // peak positions alone are cruder but close
    EXPECT_NEAR(f.at("g_ens_peaks"), 11.5, 0.1 * 11.5);
}

TEST(AvoidedCrossing, ScaleAndTranslationInvariance) {
    const auto map = linear_crossing_map(9.0, 192.5, 28.0);
    const auto ref = fit_avoided_crossing(map);
    auto scaled = map;
    for (auto& v : scaled.values) v *= 3.0;
    const auto fs = fit_avoided_crossing(scaled);
    EXPECT_NEAR(fs.at("g_ens"), ref.at("g_ens"), 1e-6);
    EXPECT_NEAR(fs.at("s21_scale"), 3.0 * ref.at("s21_scale"), 1e-6 * fs.at("s21_scale"));
    auto shifted = map;
    for (double& b : shifted.b_axis) b -= 100.0;
    for (double& w : shifted.omega_axis) w += 250.0;
    const auto ft = fit_avoided_crossing(shifted);
    EXPECT_NEAR(ft.at("g_ens"), ref.at("g_ens"), 1e-6);
    EXPECT_NEAR(ft.at("b_star"), ref.at("b_star") - 100.0, 1e-6);
    EXPECT_NEAR(ft.at("omega_r"), ref.at("omega_r") + 250.0, 1e-6);
}

TEST(AvoidedCrossing, NvSampleMap) {
    const auto cfg = load("sample1_nv.ini");
    const auto f = fit_avoided_crossing(synthetic_map(cfg));
    ASSERT_TRUE(f.converged);
    EXPECT_NEAR(f.at("g_ens"), cfg.sample.g_ens_mhz[0], 0.02 * cfg.sample.g_ens_mhz[0]);
}

TEST(AvoidedCrossing, NoisyNvSampleMap) {
    const auto cfg = load("sample1_nv.ini");
    auto map = synthetic_map(cfg);
    double peak = 0.0;
    for (const auto& v : map.values) peak = std::max(peak, std::abs(v));
    const double g = cfg.sample.g_ens_mhz[0];
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto noisy = map;
        add_magnitude_noise(noisy.values, 0.01 * peak, seed);
        const auto f = fit_avoided_crossing(noisy);
        EXPECT_TRUE(f.converged) << "seed " << seed;
        EXPECT_NEAR(f.at("g_ens"), g, 0.05 * g) << "seed " << seed;
    }
    // past the breakdown point a fit may fail, but it must not claim convergence on a wrong answer
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto noisy = map;
        add_magnitude_noise(noisy.values, 0.05 * peak, seed);
        try {
            const auto f = fit_avoided_crossing(noisy);
            if (f.converged) {
                EXPECT_NEAR(f.at("g_ens"), g, 0.05 * g) << "seed " << seed;
            }
        } catch (const FitError&) {
        }
    }
}

TEST(AvoidedCrossing, P1HyperfineTriplet) {
    FitRequest req;
    req.config = load("sample2_p1.ini");
    const auto r = run_fit(req);
    EXPECT_TRUE(r.converged);
    const auto& g = req.config->sample.g_ens_mhz;
    EXPECT_NEAR(entry(r, "mIp1.g_ens_mhz"), g[0], 0.03 * g[0]);
    EXPECT_NEAR(entry(r, "mI0.g_ens_mhz"), g[1], 0.03 * g[1]);
    EXPECT_NEAR(entry(r, "mIm1.g_ens_mhz"), g[2], 0.03 * g[2]);
}

TEST(AvoidedCrossing, RejectsMapsWithoutSplitting) {
    EXPECT_THROW(fit_avoided_crossing(linear_crossing_map(0.0, 76.6, 28.0)), FitError);
    EXPECT_THROW(fit_avoided_crossing(linear_crossing_map(11.5, 76.6, 28.0, 3)), FitError);
    EXPECT_THROW(fit_avoided_crossing(linear_crossing_map(11.5, 76.6, 28.0, 61, 5)), FitError);
}
