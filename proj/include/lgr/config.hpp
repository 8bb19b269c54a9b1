// config.hpp: strict INI experiment configuration

#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lgr/circuit_model.hpp"

namespace lgr {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Defect { nv, p1 };

inline std::string_view to_string(Defect d) { return d == Defect::nv ? "NV" : "P1"; }

using MillerIndex = std::array<int, 3>;

struct SampleConfig {
    Defect defect = Defect::nv;
    double density_ppm = 0.0;
    double volume_mm3 = 4.95;
    MillerIndex field_direction{1, 1, 0};
    double linewidth_mhz = 5.0;
    std::optional<MillerIndex> axis;         // defect orientation; default picked from the field
    std::optional<MillerIndex> ac_direction; // default: transverse to the field
    std::optional<double> orientation_fraction;
    std::optional<double> nuclear_fraction;
    double filling_factor = 1.0;
    std::vector<double> g_ens_mhz;  // measured couplings override the budget in maps

    friend bool operator==(const SampleConfig&, const SampleConfig&) = default;
};

struct ResonatorConfig {
    // mode description: either quality factors or circuit elements
    double omega_r_mhz = 5390.0;
    double q_int = 1300.0;
    double q_ext1 = 170000.0;
    double q_ext2 = 170000.0;
    std::optional<CircuitElements> circuit;
    double mode_volume_mm3 = 11.45;
    std::optional<double> b_rms_pt;

    friend bool operator==(const ResonatorConfig& a, const ResonatorConfig& b) {
        auto same_circuit = [](const std::optional<CircuitElements>& x, const std::optional<CircuitElements>& y) {
            if (x.has_value() != y.has_value()) return false;
            if (!x) return true;
            return x->l_nh == y->l_nh && x->c_pf == y->c_pf && x->r_ohm == y->r_ohm && x->cc1_ff == y->cc1_ff &&
                   x->cc2_ff == y->cc2_ff && x->cx_ff == y->cx_ff && x->z0_ohm == y->z0_ohm;
        };
        return a.omega_r_mhz == b.omega_r_mhz && a.q_int == b.q_int && a.q_ext1 == b.q_ext1 && a.q_ext2 == b.q_ext2 &&
               same_circuit(a.circuit, b.circuit) && a.mode_volume_mm3 == b.mode_volume_mm3 && a.b_rms_pt == b.b_rms_pt;
    }
};

struct SweepConfig {
    double b_min_mt = 10.0;
    double b_max_mt = 100.0;
    int b_points = 181;
    double omega_min_mhz = 5340.0;
    double omega_max_mhz = 5440.0;
    int omega_points = 201;

    friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct ExperimentConfig {
    SampleConfig sample;
    ResonatorConfig resonator;
    SweepConfig sweep;
    std::uint64_t seed = 0;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct RawEntry {
    std::string value;
    int line = 0;
};

using RawSections = std::map<std::string, std::map<std::string, RawEntry>>;

inline RawSections parse_ini(std::string_view text) {
    RawSections out;
    out[""];
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
            out[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        auto& sec = out[section];
        if (sec.contains(key))
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "' in section [" + section + "]");
        sec[key] = {value, line_no};
    }
    return out;
}

class SectionReader {
public:
    SectionReader(const RawSections& raw, std::string name) : name_(std::move(name)) {
        if (const auto it = raw.find(name_); it != raw.end()) entries_ = &it->second;
    }

    bool present() const { return entries_ != nullptr; }
    bool has(const std::string& key) const { return entries_ && entries_->contains(key); }

    std::optional<std::string> text(const std::string& key) {
        if (!has(key)) return std::nullopt;
        used_.insert(key);
        return entries_->at(key).value;
    }

    std::optional<double> number(const std::string& key) {
        auto t = text(key);
        if (!t) return std::nullopt;
        return parse_number(key, *t);
    }

    double number_or(const std::string& key, double fallback) { return number(key).value_or(fallback); }

    std::optional<std::int64_t> integer(const std::string& key) {
        auto t = text(key);
        if (!t) return std::nullopt;
        std::int64_t v = 0;
        const auto [p, ec] = std::from_chars(t->data(), t->data() + t->size(), v);
        if (ec != std::errc() || p != t->data() + t->size()) fail(key, "expected an integer, got '" + *t + "'");
        return v;
    }

    std::vector<double> numbers(const std::string& key) {
        auto t = text(key);
        if (!t) return {};
        std::vector<double> out;
        std::string s = *t;
        for (char& c : s)
            if (c == ',') c = ' ';
        std::istringstream is(s);
        std::string tok;
        while (is >> tok) out.push_back(parse_number(key, tok));
        return out;
    }

    std::optional<MillerIndex> miller(const std::string& key) {
        auto t = text(key);
        if (!t) return std::nullopt;
        return parse_miller(key, *t);
    }

    double require_number(const std::string& key) {
        if (!has(key)) throw ConfigError("missing required key '" + key + "' in section [" + name_ + "]");
        return *number(key);
    }

    void reject_unknown() const {
        if (!entries_) return;
        for (const auto& [k, e] : *entries_)
            if (!used_.contains(k))
                throw ConfigError("unknown key '" + k + "' in section [" + name_ + "] (line " + std::to_string(e.line) + ")");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        const int line = has(key) ? entries_->at(key).line : 0;
        throw ConfigError("[" + name_ + "] " + key + " (line " + std::to_string(line) + "): " + what);
    }

    void check(bool ok, const std::string& key, const std::string& what) const {
        if (!ok) fail(key, what);
    }

private:
    double parse_number(const std::string& key, const std::string& t) const {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v)) fail(key, "expected a number, got '" + t + "'");
        return v;
    }

    // "1 1 0", "1,1,0", "[1 1 0]" or compact "[110]" / "[1-10]"
    MillerIndex parse_miller(const std::string& key, std::string t) const {
        std::string s;
        for (char c : t)
            if (c != '[' && c != ']') s.push_back(c);
        for (char& c : s)
            if (c == ',') c = ' ';
        std::vector<int> v;
        std::istringstream is(s);
        std::string tok;
        std::vector<std::string> toks;
        while (is >> tok) toks.push_back(tok);
        if (toks.size() == 1) {
            // compact form: one digit per index, optional leading minus
            const std::string& c = toks[0];
            for (std::size_t k = 0; k < c.size(); ++k) {
                int sign = 1;
                if (c[k] == '-') {
                    sign = -1;
                    ++k;
                }
                if (k >= c.size() || c[k] < '0' || c[k] > '9') fail(key, "malformed Miller index '" + t + "'");
                v.push_back(sign * (c[k] - '0'));
            }
        } else {
            for (const auto& x : toks) {
                int iv = 0;
                const auto [p, ec] = std::from_chars(x.data(), x.data() + x.size(), iv);
                if (ec != std::errc() || p != x.data() + x.size()) fail(key, "malformed Miller index '" + t + "'");
                v.push_back(iv);
            }
        }
        if (v.size() != 3) fail(key, "a Miller index needs three integers, got '" + t + "'");
        if (v[0] == 0 && v[1] == 0 && v[2] == 0) fail(key, "Miller index must not be [000]");
        return {v[0], v[1], v[2]};
    }

    std::string name_;
    const std::map<std::string, RawEntry>* entries_ = nullptr;
    std::set<std::string> used_;
};

inline std::string miller_text(const MillerIndex& m) {
    return std::to_string(m[0]) + " " + std::to_string(m[1]) + " " + std::to_string(m[2]);
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text) {
    const auto raw = detail::parse_ini(text);
    for (const auto& [name, entries] : raw)
        if (name != "" && name != "sample" && name != "resonator" && name != "sweep")
            throw ConfigError("unknown section [" + name + "]");

    ExperimentConfig cfg;

    detail::SectionReader global(raw, "");
    if (auto s = global.integer("seed")) {
        global.check(*s >= 0, "seed", "seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(*s);
    }
    global.reject_unknown();

    detail::SectionReader sample(raw, "sample");
    if (!sample.present()) throw ConfigError("missing required section [sample]");
    {
        auto& s = cfg.sample;
        const auto defect = sample.text("defect");
        if (!defect) throw ConfigError("missing required key 'defect' in section [sample]");
        if (*defect == "NV" || *defect == "nv")
            s.defect = Defect::nv;
        else if (*defect == "P1" || *defect == "p1")
            s.defect = Defect::p1;
        else
            sample.fail("defect", "must be NV or P1, got '" + *defect + "'");
        s.density_ppm = sample.require_number("density_ppm");
        sample.check(s.density_ppm >= 0.0, "density_ppm", "must be non-negative");
        s.volume_mm3 = sample.number_or("volume_mm3", s.volume_mm3);
        sample.check(s.volume_mm3 >= 0.0, "volume_mm3", "must be non-negative");
        if (auto m = sample.miller("field_direction")) s.field_direction = *m;
        s.linewidth_mhz = sample.number_or("linewidth_mhz", s.linewidth_mhz);
        sample.check(s.linewidth_mhz > 0.0, "linewidth_mhz", "must be positive");
        s.axis = sample.miller("axis");
        s.ac_direction = sample.miller("ac_direction");
        s.orientation_fraction = sample.number("orientation_fraction");
        s.nuclear_fraction = sample.number("nuclear_fraction");
        s.filling_factor = sample.number_or("filling_factor", s.filling_factor);
        auto frac = [&](const char* key, double v) { sample.check(v >= 0.0 && v <= 1.0, key, "must lie in [0, 1]"); };
        if (s.orientation_fraction) frac("orientation_fraction", *s.orientation_fraction);
        if (s.nuclear_fraction) frac("nuclear_fraction", *s.nuclear_fraction);
        frac("filling_factor", s.filling_factor);
        s.g_ens_mhz = sample.numbers("g_ens_mhz");
        for (double g : s.g_ens_mhz) sample.check(g >= 0.0, "g_ens_mhz", "couplings must be non-negative");
        const std::size_t expected = s.defect == Defect::nv ? 1 : 3;
        if (!s.g_ens_mhz.empty())
            sample.check(s.g_ens_mhz.size() == expected, "g_ens_mhz",
                         "expected " + std::to_string(expected) + " value(s) for " + std::string(to_string(s.defect)));
    }
    sample.reject_unknown();

    detail::SectionReader res(raw, "resonator");
    {
        auto& r = cfg.resonator;
        const bool circuit = res.has("l_nh") || res.has("c_pf") || res.has("r_ohm") || res.has("cc1_ff") ||
                             res.has("cc2_ff") || res.has("cx_ff");
        if (circuit) {
            for (const char* k : {"omega_r_mhz", "q_int", "q_ext1", "q_ext2"})
                if (res.has(k)) throw ConfigError(std::string("[resonator] ") + k + " cannot be combined with circuit elements");
            CircuitElements e;
            e.l_nh = res.require_number("l_nh");
            e.c_pf = res.require_number("c_pf");
            e.r_ohm = res.require_number("r_ohm");
            e.cc1_ff = res.require_number("cc1_ff");
            e.cc2_ff = res.require_number("cc2_ff");
            e.cx_ff = res.number_or("cx_ff", 0.0);
            res.check(e.l_nh > 0.0, "l_nh", "must be positive");
            res.check(e.c_pf > 0.0, "c_pf", "must be positive");
            res.check(e.r_ohm > 0.0, "r_ohm", "must be positive");
            res.check(e.cc1_ff >= 0.0, "cc1_ff", "must be non-negative");
            res.check(e.cc2_ff >= 0.0, "cc2_ff", "must be non-negative");
            res.check(e.cx_ff >= 0.0, "cx_ff", "must be non-negative");
            r.circuit = e;
        } else {
            if (!res.has("omega_r_mhz")) throw ConfigError("missing required key 'omega_r_mhz' in section [resonator]");
            r.omega_r_mhz = *res.number("omega_r_mhz");
            res.check(r.omega_r_mhz > 0.0, "omega_r_mhz", "must be positive");
            r.q_int = res.number_or("q_int", r.q_int);
            r.q_ext1 = res.number_or("q_ext1", r.q_ext1);
            r.q_ext2 = res.number_or("q_ext2", r.q_ext2);
            for (const char* k : {"q_int", "q_ext1", "q_ext2"}) {
                const double v = std::string_view(k) == "q_int" ? r.q_int : (std::string_view(k) == "q_ext1" ? r.q_ext1 : r.q_ext2);
                res.check(v > 0.0, k, "must be positive");
            }
        }
        // z0 has a default in both modes
        const double z0 = res.number_or("z0_ohm", 50.0);
        res.check(z0 > 0.0, "z0_ohm", "must be positive");
        if (r.circuit) r.circuit->z0_ohm = z0;
        else if (z0 != 50.0) res.fail("z0_ohm", "only meaningful together with circuit elements");
        r.mode_volume_mm3 = res.number_or("mode_volume_mm3", r.mode_volume_mm3);
        res.check(r.mode_volume_mm3 > 0.0, "mode_volume_mm3", "must be positive");
        r.b_rms_pt = res.number("b_rms_pt");
        if (r.b_rms_pt) res.check(*r.b_rms_pt > 0.0, "b_rms_pt", "must be positive");
    }
    res.reject_unknown();
    if (!cfg.resonator.circuit && !res.present()) throw ConfigError("missing required section [resonator]");

    detail::SectionReader sweep(raw, "sweep");
    {
        auto& w = cfg.sweep;
        const double omega_r = cfg.resonator.circuit ? q_decomposition([&] {
            auto e = *cfg.resonator.circuit;
            e.cx_ff = 0.0;
            return e;
        }()).omega_0
                                                     : cfg.resonator.omega_r_mhz;
        if (cfg.sample.defect == Defect::p1) {
            w.b_min_mt = 185.0;
            w.b_max_mt = 200.0;
            w.b_points = 151;
        }
        w.omega_min_mhz = omega_r - 50.0;
        w.omega_max_mhz = omega_r + 50.0;
        w.b_min_mt = sweep.number_or("b_min_mt", w.b_min_mt);
        w.b_max_mt = sweep.number_or("b_max_mt", w.b_max_mt);
        if (auto n = sweep.integer("b_points")) w.b_points = static_cast<int>(*n);
        w.omega_min_mhz = sweep.number_or("omega_min_mhz", w.omega_min_mhz);
        w.omega_max_mhz = sweep.number_or("omega_max_mhz", w.omega_max_mhz);
        if (auto n = sweep.integer("omega_points")) w.omega_points = static_cast<int>(*n);
        sweep.check(w.b_min_mt >= 0.0, "b_min_mt", "must be non-negative");
        sweep.check(w.b_min_mt < w.b_max_mt, "b_max_mt", "b_min_mt must be below b_max_mt");
        sweep.check(w.b_points >= 2, "b_points", "grids need at least 2 points");
        sweep.check(w.omega_min_mhz < w.omega_max_mhz, "omega_max_mhz", "omega_min_mhz must be below omega_max_mhz");
        sweep.check(w.omega_points >= 2, "omega_points", "grids need at least 2 points");
    }
    sweep.reject_unknown();
    return cfg;
}

// Canonical text form with every default spelled out; parse_config(dump_config(c)) == c.
inline std::string dump_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    const auto& s = cfg.sample;
    const auto& r = cfg.resonator;
    const auto& w = cfg.sweep;
    auto kv = [&](std::string_view k, const std::string& v) { os << k << " = " << v << "\n"; };
    kv("seed", std::to_string(cfg.seed));
    os << "\n[sample]\n";
    kv("defect", std::string(to_string(s.defect)));
    kv("density_ppm", format_double(s.density_ppm));
    kv("volume_mm3", format_double(s.volume_mm3));
    kv("field_direction", detail::miller_text(s.field_direction));
    kv("linewidth_mhz", format_double(s.linewidth_mhz));
    if (s.axis) kv("axis", detail::miller_text(*s.axis));
    if (s.ac_direction) kv("ac_direction", detail::miller_text(*s.ac_direction));
    if (s.orientation_fraction) kv("orientation_fraction", format_double(*s.orientation_fraction));
    if (s.nuclear_fraction) kv("nuclear_fraction", format_double(*s.nuclear_fraction));
    kv("filling_factor", format_double(s.filling_factor));
    if (!s.g_ens_mhz.empty()) {
        std::string g;
        for (std::size_t k = 0; k < s.g_ens_mhz.size(); ++k) g += (k ? ", " : "") + format_double(s.g_ens_mhz[k]);
        kv("g_ens_mhz", g);
    }
    os << "\n[resonator]\n";
    if (r.circuit) {
        kv("l_nh", format_double(r.circuit->l_nh));
        kv("c_pf", format_double(r.circuit->c_pf));
        kv("r_ohm", format_double(r.circuit->r_ohm));
        kv("cc1_ff", format_double(r.circuit->cc1_ff));
        kv("cc2_ff", format_double(r.circuit->cc2_ff));
        kv("cx_ff", format_double(r.circuit->cx_ff));
        kv("z0_ohm", format_double(r.circuit->z0_ohm));
    } else {
        kv("omega_r_mhz", format_double(r.omega_r_mhz));
        kv("q_int", format_double(r.q_int));
        kv("q_ext1", format_double(r.q_ext1));
        kv("q_ext2", format_double(r.q_ext2));
    }
    kv("mode_volume_mm3", format_double(r.mode_volume_mm3));
    if (r.b_rms_pt) kv("b_rms_pt", format_double(*r.b_rms_pt));
    os << "\n[sweep]\n";
    kv("b_min_mt", format_double(w.b_min_mt));
    kv("b_max_mt", format_double(w.b_max_mt));
    kv("b_points", std::to_string(w.b_points));
    kv("omega_min_mhz", format_double(w.omega_min_mhz));
    kv("omega_max_mhz", format_double(w.omega_max_mhz));
    kv("omega_points", std::to_string(w.omega_points));
    return os.str();
}

}  // namespace lgr
