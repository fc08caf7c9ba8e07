#pragma once

// Command-line front end. Every subcommand writes CSV/text artifacts into the
// output directory; plotting is left to external tools.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure (a
// diagnostic.txt is written to the output directory).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qwm/ancilla_meter.hpp"
#include "qwm/chip_config.hpp"
#include "qwm/chip_sim.hpp"
#include "qwm/csv.hpp"
#include "qwm/errors.hpp"
#include "qwm/quantum_core.hpp"
#include "qwm/work_distribution.hpp"

namespace qwm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct Options {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    bool exact = false;
    int reps = 3;
    std::vector<double> beta_e;
    std::vector<double> rf_areas;
    std::string image_path;
};

inline std::vector<double> default_betas() { return {0.58, 1.11, 1.75}; }

inline std::vector<double> default_rf_areas() {
    std::vector<double> a;
    for (int k = 1; k <= 10; ++k) a.push_back(k * std::numbers::pi / 10.0);
    return a;
}

class Runner {
public:
    Runner(Options opt, std::ostream& out) : opt_(std::move(opt)), out_(out) {}

    int run() {
        config_ = opt_.config_path.empty() ? ExperimentConfig{} : load_config(opt_.config_path);
        if (opt_.seed) config_.seed = *opt_.seed;
        config_.validate();
        std::filesystem::create_directories(opt_.out_dir);
        const std::string& c = opt_.command;
        if (c == "exact-dist") return exact_dist();
        if (c == "povm-check") return povm_check();
        if (c == "smear") return smear();
        if (c == "simulate") return simulate();
        if (c == "analyze") return analyze();
        if (c == "sweep") return sweep();
        if (c == "manifold") return manifold();
        if (c == "deltaf") return deltaf();
        throw ConfigError("unknown command '" + c + "'");
    }

private:
    std::string path(const std::string& name) const { return (std::filesystem::path(opt_.out_dir) / name).string(); }

    std::ofstream open(const std::string& name) const {
        std::ofstream f(path(name));
        if (!f) throw ConfigError("cannot write '" + path(name) + "'");
        return f;
    }

    std::vector<double> betas() const { return opt_.beta_e.empty() ? std::vector<double>{config_.beta_E} : opt_.beta_e; }
    std::vector<double> areas() const {
        return opt_.rf_areas.empty() ? std::vector<double>{config_.rf_pulse_area} : opt_.rf_areas;
    }
    std::vector<double> sweep_betas() const { return opt_.beta_e.empty() ? default_betas() : opt_.beta_e; }
    std::vector<double> sweep_areas() const { return opt_.rf_areas.empty() ? default_rf_areas() : opt_.rf_areas; }

    int exact_dist() {
        auto f = open("exact_dist.csv");
        bool header = true;
        for (double beta : betas())
            for (double area : areas()) {
                ExperimentConfig c = config_;
                c.beta_E = beta;
                c.rf_pulse_area = area;
                const PreparedSystem sys = prepare_system(c);
                const double g = jarzynski_average(sys.distribution, beta).g;
                write_distribution_csv(f, "beta_E=" + csv::num(beta) + " rf_area=" + csv::num(area),
                                       sys.distribution, g, delta_f_from_partition(sys.pair, beta), header);
                header = false;
            }
        out_ << "wrote " << path("exact_dist.csv") << '\n';
        return kExitOk;
    }

    int povm_check() {
        const HamiltonianPair pair = HamiltonianPair::two_level(config_.energy_ratio);
        std::vector<DrivingUnitary> drivings{rf_unitary(config_.rf_pulse_area, config_.rf_axis_phase)};
        for (int k = 0; k < opt_.reps; ++k) drivings.push_back(random_unitary(2, rng::derive(config_.seed, k)));
        const QuantumState rho = pseudo_thermal_state(config_.beta_E, pair.initial());
        double completeness = 0.0, min_eig = std::numeric_limits<double>::infinity(), consistency = 0.0;
        for (const auto& u : drivings) {
            const PovmElementSet povm = povm_elements(pair, u);
            completeness = std::max(completeness, povm.completeness_error());
            min_eig = std::min(min_eig, povm.min_eigenvalue());
            const auto probs = povm.outcome_probabilities(rho);
            const WorkDistribution d = tpm_distribution(rho, pair, u);
            for (std::size_t k = 0; k < probs.size(); ++k)
                consistency = std::max(consistency, std::abs(probs[k] - d.entries()[k].probability));
        }
        const bool ok = completeness < 1e-12 && min_eig > -kPositivityTolerance && consistency < 1e-12;
        std::ostringstream report;
        report << "drivings " << drivings.size() << '\n'
               << "completeness_max_abs " << csv::num(completeness) << '\n'
               << "min_eigenvalue " << csv::num(min_eig) << '\n'
               << "tpm_consistency_max_abs " << csv::num(consistency) << '\n'
               << "status " << (ok ? "ok" : "FAILED") << '\n';
        open("povm_check.txt") << report.str();
        out_ << report.str();
        if (!ok) throw NumericalError("POVM property check failed:\n" + report.str());
        return kExitOk;
    }

    int smear() {
        const PreparedSystem sys = prepare_system(config_);
        const GaussianWavepacket packet{0.0, 0.0, config_.sigma, config_.mass};
        const FlagStateSet flags = flag_states(sys.distribution, packet, config_.lambda());
        const SmearedOutcome full = smeared_density(flags, true, sys.state, sys.pair, sys.driving);
        {
            auto f = open("smear.csv");
            csv::write_curve(f, "p", "density", full.grid, full.density);
        }
        {
            auto f = open("smear_diagonal.csv");
            csv::write_curve(f, "p", "density", full.grid, full.diagonal);
        }
        double gap = 0.0;
        for (double x : full.cross) gap = std::max(gap, std::abs(x));
        std::ostringstream report;
        report << "lambda " << csv::num(flags.lambda) << '\n'
               << "sigma " << csv::num(config_.sigma) << '\n'
               << "integral " << csv::num(full.integral) << '\n'
               << "coherence_sup_gap " << csv::num(gap) << '\n'
               << "coherence_bound " << csv::num(full.bound.value_or(0.0)) << '\n';
        const double spread = packet.momentum_spread();
        for (const auto& fl : flags.flags)
            report << "window n=" << fl.n + 1 << " m=" << fl.m + 1 << " P=" << csv::num(fl.weight)
                   << " mass=" << csv::num(full.mass(fl.packet.momentum - 6 * spread, fl.packet.momentum + 6 * spread))
                   << '\n';
        open("smear_report.txt") << report.str();
        out_ << report.str();
        return kExitOk;
    }

    int simulate() {
        const CloudImage img = simulate_run(config_);
        {
            auto f = open("image.csv");
            write_image_csv(f, img);
        }
        out_ << "bins " << img.bins() << " total_signal " << csv::num(img.total_signal)
             << (img.overlap_warning ? " WARNING: clouds overlap" : "") << '\n'
             << "wrote " << path("image.csv") << '\n';
        return kExitOk;
    }

    int analyze() {
        const std::string image = opt_.image_path.empty() ? path("image.csv") : opt_.image_path;
        std::ifstream in(image);
        if (!in) throw ConfigError("cannot open image '" + image + "'");
        const RunResult r = analyze_image(read_image_csv(in), config_);
        {
            auto f = open("run_result.csv");
            write_run_result_csv(f, r);
        }
        out_ << "clouds " << r.clouds.size();
        if (r.recovered_energy_ratio) out_ << " recovered_energy_ratio " << csv::num(*r.recovered_energy_ratio);
        out_ << " G " << csv::num(jarzynski_average(r.distribution, config_.beta_E).g) << '\n';
        for (const auto& d : r.diagnostics) out_ << "note: " << d << '\n';
        out_ << "wrote " << path("run_result.csv") << '\n';
        return kExitOk;
    }

    SweepTable run_sweep() const {
        return jarzynski_sweep(config_, sweep_areas(), sweep_betas(), opt_.reps, opt_.exact);
    }

    int sweep() {
        const SweepTable t = run_sweep();
        {
            auto f = open("sweep.csv");
            write_sweep_csv(f, t);
        }
        {
            auto f = open("sweep_summary.csv");
            write_sweep_summary_csv(f, t);
        }
        for (const auto& e : t.errors) out_ << "run error: " << e << '\n';
        out_ << "wrote " << path("sweep.csv") << " and " << path("sweep_summary.csv") << '\n';
        return kExitOk;
    }

    int manifold() {
        const SweepTable t = run_sweep();
        auto points = open("manifold_points.csv");
        csv::write_row(points, {"beta_E", "rf_area", "rep", "x1", "x2", "x3"});
        for (const auto& r : t.rows) {
            if (!r.distribution) continue;
            const auto x = r.distribution->reduced_coordinates();
            std::vector<std::string> cells = {csv::num(r.beta_E), csv::num(r.rf_area), std::to_string(r.rep)};
            for (Eigen::Index k = 0; k < x.size(); ++k) cells.push_back(csv::num(x(k)));
            csv::write_row(points, cells);
        }
        std::ostringstream report;
        bool ok = true;
        for (const auto& temp : t.temperatures) {
            ManifoldFitOptions fo;
            fo.beta = temp.beta_E;
            if (!opt_.exact) {
                fo.forced_dimension = 1;
                fo.residual_tolerance = 0.1;
            }
            const ManifoldFit fit = manifold_fit(t.distributions(temp.beta_E), fo);
            ok = ok && fit.converged;
            report << "beta_E " << csv::num(temp.beta_E) << " dimension " << fit.dimension << " max_residual "
                   << csv::num(fit.max_residual) << " constraint_residual "
                   << csv::num(fit.constraint_residual.value_or(0.0)) << " beta_dF_fit "
                   << csv::num(fit.estimated_beta_delta_f.value_or(std::numeric_limits<double>::quiet_NaN()))
                   << " beta_dF_PF " << csv::num(temp.partition_function) << (fit.converged ? "" : " FAILED: ")
                   << fit.message << '\n';
        }
        open("manifold_report.txt") << report.str();
        out_ << report.str();
        if (!ok) throw NumericalError("manifold fit failed:\n" + report.str());
        return kExitOk;
    }

    int deltaf() {
        const SweepTable t = run_sweep();
        auto f = open("deltaf.csv");
        csv::write_row(f, {"beta_E", "beta_dF_JI", "sem_JI", "beta_dF_PF", "dF_over_E_JI", "dF_over_E_PF"});
        out_ << "beta_E  beta_dF(JI)          beta_dF(PF)\n";
        for (const auto& temp : t.temperatures) {
            const double ji = temp.jarzynski.mean;
            const double pf = temp.partition_function;
            csv::write_row(f, {csv::num(temp.beta_E), csv::num(ji), csv::num(temp.jarzynski.sem), csv::num(pf),
                               csv::num(ji / temp.beta_E), csv::num(pf / temp.beta_E)});
            char line[160];
            std::snprintf(line, sizeof line, "%-7.2f %+.4f +- %.4f    %+.4f\n", temp.beta_E, ji, temp.jarzynski.sem, pf);
            out_ << line;
        }
        for (const auto& e : t.errors) out_ << "run error: " << e << '\n';
        return kExitOk;
    }

    Options opt_;
    std::ostream& out_;
    ExperimentConfig config_;
};

/// Parses argv and runs one subcommand; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Quantum work meter simulator"};
    app.require_subcommand(1);
    Options opt;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"exact-dist", "exact TPM work distribution CSV"},
        {"povm-check", "completeness / positivity / consistency report for the work POVM"},
        {"smear", "ancilla outcome density with coherence terms and error bound"},
        {"simulate", "simulate one atom-chip shot and write the cloud image"},
        {"analyze", "detect clouds in an image and infer the work distribution"},
        {"sweep", "G = -ln<exp(-beta w)> across RF areas, temperatures and repetitions"},
        {"manifold", "fit the Jarzynski manifold to swept probability vectors"},
        {"deltaf", "beta*DeltaF from the Jarzynski identity and from partition functions"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config_path, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out_dir, "output directory (created if absent)");
        sub->add_option("--seed", opt.seed, "master seed override");
        sub->add_flag("--exact", opt.exact, "bypass imaging and use exact probabilities");
        sub->add_option("--reps", opt.reps, "repetitions per point")->check(CLI::PositiveNumber);
        sub->add_option("--beta-e", opt.beta_e, "comma-separated beta*E values")->delimiter(',');
        sub->add_option("--rf-areas", opt.rf_areas, "comma-separated RF pulse areas (rad)")->delimiter(',');
        if (name == "analyze") sub->add_option("--image", opt.image_path, "image CSV (default <out>/image.csv)");
        sub->callback([&opt, name = name] { opt.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    try {
        return Runner(opt, out).run();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        std::error_code ec;
        std::filesystem::create_directories(opt.out_dir, ec);
        std::ofstream diag(std::filesystem::path(opt.out_dir) / "diagnostic.txt");
        diag << "command " << opt.command << '\n' << e.what() << '\n';
        return kExitNumerical;
    }
}

} // namespace qwm::cli
