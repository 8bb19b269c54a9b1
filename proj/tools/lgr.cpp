// lgr: spin-ensemble / loop-gap resonator spectroscopy from the command line

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lgr/experiment.hpp"

namespace {

enum ExitCode : int {
    ok = 0,
    usage = 1,
    config_error = 2,
    fit_failure = 3,
    io_error = 4,
    domain_error = 5,
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error reading '" + path + "'");
    return ss.str();
}

lgr::ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) throw lgr::ConfigError("this command needs --config PATH");
    try {
        return lgr::parse_config(read_file(path));
    } catch (const lgr::ConfigError& e) {
        throw lgr::ConfigError(path + ": " + e.what());
    }
}

// Output is assembled in memory so a failing command never leaves a truncated file behind.
void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text << std::flush;
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + out_path + "' for writing");
    out << text;
    out.close();
    if (!out) throw IoError("error writing '" + out_path + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spin-ensemble / loop-gap resonator spectroscopy: forward models and fits"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_path;
    double noise = 0.0;
    unsigned threads = 1;
    app.add_option("--config", config_path, "experiment config (INI)");
    app.add_option("--out", out_path, "output file (default: stdout)");
    app.add_option("--noise", noise, "Gaussian sigma added to |S21| of synthetic data")->check(CLI::NonNegativeNumber);
    app.add_option("--threads", threads, "worker threads for map evaluation")->check(CLI::PositiveNumber);

    auto* levels = app.add_subcommand("levels", "energy levels versus field (CSV)");
    auto* transitions = app.add_subcommand("transitions", "ESR line frequencies and weights versus field (CSV)");
    auto* map = app.add_subcommand("map", "S21 transmission map over the (B, f) sweep (long CSV)");
    auto* budget = app.add_subcommand("budget", "vacuum field, single-spin and ensemble coupling");

    auto* fit = app.add_subcommand("fit", "fit a map or trace from --input or from the config's synthetic data");
    std::string fit_kind = "crossing", input_path;
    std::vector<double> b_window;
    bool power = false;
    fit->add_option("--kind", fit_kind, "lorentzian, fano, q or crossing")
        ->check(CLI::IsMember({"lorentzian", "fano", "q", "crossing"}));
    fit->add_option("--input", input_path, "CSV written by `map` or a trace with f_MHz,S21_mag columns");
    fit->add_option("--b-window", b_window, "field window LO HI in mT (crossing fits)")->expected(2);
    fit->add_flag("--power", power, "square |S21| before Lorentzian/Fano fits");

    auto* circuit = app.add_subcommand("circuit", "lumped-element loop-gap transmission (CSV)");
    bool decompose = false;
    circuit->add_flag("--decompose", decompose, "print the Q decomposition instead of the trace");

    auto* config = app.add_subcommand("config", "config utilities");
    config->require_subcommand(1);
    auto* dump = config->add_subcommand("dump", "print the parsed config in canonical form");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        std::ostringstream os;
        int status = ok;
        if (*levels) {
            lgr::write_levels(os, load_config(config_path));
        } else if (*transitions) {
            lgr::write_transitions(os, load_config(config_path));
        } else if (*map) {
            const auto cfg = load_config(config_path);
            auto m = lgr::synthetic_map(cfg, threads);
            lgr::add_magnitude_noise(m.values, noise, cfg.seed);
            lgr::write_map(os, m);
        } else if (*budget) {
            lgr::budget_report(load_config(config_path)).write(os);
        } else if (*fit) {
            lgr::FitRequest req;
            req.kind = lgr::parse_fit_kind(fit_kind);
            if (!config_path.empty()) req.config = load_config(config_path);
            if (!input_path.empty()) {
                std::istringstream in(read_file(input_path));
                try {
                    req.input = lgr::read_csv(in);
                } catch (const lgr::CsvError& e) {
                    throw lgr::CsvError(input_path + ": " + e.what());
                }
            }
            if (!req.input && !req.config) throw lgr::ConfigError("fit needs --input PATH or --config PATH");
            if (b_window.size() == 2) req.b_window = std::pair{b_window[0], b_window[1]};
            req.power = power;
            req.noise = noise;
            req.threads = threads;
            const auto report = lgr::run_fit(req);
            report.write(os);
            if (!report.converged) {
                std::cerr << "lgr: fit did not converge\n";
                status = fit_failure;
            }
        } else if (*circuit) {
            const auto cfg = load_config(config_path);
            if (decompose)
                lgr::circuit_report(cfg).write(os);
            else
                lgr::write_circuit(os, cfg);
        } else if (*dump) {
            os << lgr::dump_config(load_config(config_path));
        }
        emit(os.str(), out_path);
        return status;
    } catch (const lgr::ConfigError& e) {
        std::cerr << "lgr: config error: " << e.what() << "\n";
        return config_error;
    } catch (const lgr::FitError& e) {
        std::cerr << "lgr: fit failed: " << e.what() << "\n";
        return fit_failure;
    } catch (const lgr::CsvError& e) {
        std::cerr << "lgr: malformed input: " << e.what() << "\n";
        return io_error;
    } catch (const IoError& e) {
        std::cerr << "lgr: I/O error: " << e.what() << "\n";
        return io_error;
    } catch (const std::exception& e) {
        std::cerr << "lgr: " << e.what() << "\n";
        return domain_error;
    }
}
