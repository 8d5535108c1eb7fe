// Command-line front end: training experiments, outage sweeps, Monte Carlo
// verification, scheme construction and the convergence-bound calculator.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "cogc/bound.hpp"
#include "cogc/channel.hpp"
#include "cogc/errors.hpp"
#include "cogc/experiment.hpp"
#include "cogc/gc_code.hpp"
#include "cogc/outage_analysis.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<double> parse_grid(const std::string& text) {
    // Either "a,b,c" or "start:stop:step" (inclusive stop).
    std::vector<double> values;
    if (text.empty()) return values;
    if (text.find(':') != std::string::npos) {
        double start = 0.0, stop = 0.0, step = 1.0;
        if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &stop, &step) < 2 ||
            !(step > 0.0))
            throw cogc::ConfigError("bad grid spec '" + text + "'");
        for (double v = start; v <= stop + 1e-12; v += step) values.push_back(v);
        return values;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
    return values;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stoi(item));
    return values;
}

cogc::channel::OutageMode parse_mode_flag(const std::string& mode) {
    if (mode == "exact") return cogc::channel::OutageMode::exact;
    if (mode == "linearized") return cogc::channel::OutageMode::linearized;
    throw cogc::ConfigError("--mode must be 'exact' or 'linearized'");
}

struct TrainArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::optional<std::string> methods_override;
    bool calibrate_bounds = false;
    int threads = 1;
};

int cmd_train(const TrainArgs& args) {
    auto cfg = cogc::exp::load_config(args.config_path);
    if (args.seed_override) cfg.seeds = {*args.seed_override};
    if (args.out_override) cfg.out_dir = *args.out_override;
    if (args.methods_override) {
        cfg.methods.clear();
        std::stringstream ss(*args.methods_override);
        std::string item;
        while (std::getline(ss, item, ',')) cfg.methods.push_back(item);
        cfg.validate();
    }
    if (args.calibrate_bounds) {
        cfg.upper = cogc::exp::calibrate_upper_bound(cfg);
        std::cout << "calibrated quantizer upper bound: "
                  << cogc::exp::format_double(cfg.upper) << "\n";
    }
    const auto output = cogc::exp::run_experiment(cfg, args.threads);
    std::cout << "wrote " << output.per_run_files.size() << " run files and "
              << output.aggregate_files.size() << " aggregates under " << cfg.out_dir
              << "\n";
    if (output.clamped_total > 0)
        std::cerr << "warning: quantizer clamped " << output.clamped_total
                  << " coordinates; consider widening the bounds\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cooperative gradient coding simulator and analysis toolkit"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "run configured experiments");
    train->add_option("-c,--config", train_args.config_path, "experiment config (JSON)")
        ->required();
    std::uint64_t seed_flag = 0;
    auto* seed_opt = train->add_option("--seed", seed_flag, "run a single seed");
    std::string out_flag, methods_flag;
    auto* out_opt = train->add_option("--out", out_flag, "output directory override");
    auto* methods_opt =
        train->add_option("--methods", methods_flag, "comma-separated method override");
    train->add_flag("--calibrate-bounds", train_args.calibrate_bounds,
                    "pre-scan one unquantized run to size the quantizer upper bound");
    train->add_option("--threads", train_args.threads, "parallel (method, seed) cells");

    auto* outage_cmd = app.add_subcommand("outage", "closed-form outage sweep");
    std::string rates_flag = "0.2", snrs_flag = "1:15:1", s_flag = "5";
    std::string mode_flag = "linearized", outage_out;
    int sweep_clients = 10;
    double sigma2_flag = 0.5;
    outage_cmd->add_option("--rates", rates_flag, "rate grid (list or start:stop:step)");
    outage_cmd->add_option("--snrs", snrs_flag, "SNR grid (list or start:stop:step)");
    outage_cmd->add_option("-s,--tolerances", s_flag, "straggler tolerance list");
    outage_cmd->add_option("-M,--clients", sweep_clients, "client count");
    outage_cmd->add_option("--mode", mode_flag, "outage mode: exact|linearized");
    outage_cmd->add_option("--sigma2", sigma2_flag, "fading variance sigma^2");
    outage_cmd->add_option("-o,--out", outage_out, "CSV output path (default stdout)");

    auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo outage estimate");
    int mc_clients = 10, mc_s = 5, mc_threads = 1;
    double mc_qa = 0.1, mc_qb = -1.0;
    std::uint64_t mc_trials = 1000000, mc_seed = 0;
    mc_cmd->add_option("-M,--clients", mc_clients, "client count");
    mc_cmd->add_option("-s,--tolerance", mc_s, "straggler tolerance");
    mc_cmd->add_option("--q-a", mc_qa, "D2D link outage probability");
    mc_cmd->add_option("--q-b", mc_qb, "D2P link outage probability (default: q-a)");
    mc_cmd->add_option("--trials", mc_trials, "number of trials");
    mc_cmd->add_option("--seed", mc_seed, "RNG seed");
    mc_cmd->add_option("--threads", mc_threads, "worker threads");

    auto* gc_cmd = app.add_subcommand("gc", "construct and verify a coding scheme");
    int gc_clients = 10, gc_s = 5;
    std::uint64_t gc_seed = 0;
    std::string gc_export, gc_verify;
    gc_cmd->add_option("-M,--clients", gc_clients, "client count");
    gc_cmd->add_option("-s,--tolerance", gc_s, "straggler tolerance");
    gc_cmd->add_option("--seed", gc_seed, "construction seed");
    gc_cmd->add_option("--export", gc_export, "write the scheme dump to this path");
    gc_cmd->add_option("--verify", gc_verify, "import a dump and verify it instead");

    auto* bound_cmd = app.add_subcommand("bound", "convergence-bound calculator");
    cogc::bound::BoundParams bp;
    double bp_dissim = 1.0, bp_j = 0.0;
    std::string bound_out;
    bound_cmd->add_option("-L,--smoothness", bp.smoothness, "smoothness constant L");
    bound_cmd->add_option("--sigma2", bp.grad_variance, "gradient variance sigma^2");
    bound_cmd->add_option("--batch", bp.batch, "minibatch size dividing sigma^2");
    bound_cmd->add_option("-D,--dissimilarity", bp_dissim, "common dissimilarity bound");
    bound_cmd->add_option("--gap", bp.f_star_gap, "|F(theta_0) - F*|");
    bound_cmd->add_option("--eta", bp.eta, "explicit learning rate");
    bound_cmd->add_flag("--no-schedule{false}", bp.paper_schedule,
                        "use --eta instead of (1/L)sqrt(M/T)");
    bound_cmd->add_option("-I,--local-steps", bp.local_steps, "local steps per round");
    bound_cmd->add_option("-T,--rounds", bp.rounds, "preliminary round budget");
    bound_cmd->add_option("-M,--clients", bp.clients, "client count");
    bound_cmd->add_option("--p-o", bp.p_o, "overall outage probability");
    bound_cmd->add_option("--j-term", bp_j, "per-round sum_m p_m^2 J^2");
    bound_cmd->add_option("-o,--out", bound_out, "CSV output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train->parsed()) {
            if (*seed_opt) train_args.seed_override = seed_flag;
            if (*out_opt) train_args.out_override = out_flag;
            if (*methods_opt) train_args.methods_override = methods_flag;
            return cmd_train(train_args);
        }
        if (outage_cmd->parsed()) {
            const auto rates = parse_grid(rates_flag);
            const auto snrs = parse_grid(snrs_flag);
            const auto tols = parse_int_list(s_flag);
            std::ofstream file;
            std::ostream* out = &std::cout;
            if (!outage_out.empty()) {
                file.open(outage_out);
                if (!file) throw cogc::ConfigError("cannot open output: " + outage_out);
                out = &file;
            }
            cogc::exp::sweep_outage(rates, snrs, tols, sweep_clients,
                                    parse_mode_flag(mode_flag), sigma2_flag, 0, 0, 1,
                                    *out);
            return kExitOk;
        }
        if (mc_cmd->parsed()) {
            if (mc_qb < 0.0) mc_qb = mc_qa;
            const auto est = cogc::outage::monte_carlo_outage(mc_clients, mc_s, mc_qa,
                                                              mc_qb, mc_trials, mc_seed,
                                                              mc_threads);
            const auto closed =
                cogc::outage::closed_form_outage(mc_clients, mc_s, mc_qa);
            std::cout << "mc_estimate," << cogc::exp::format_double(est.estimate) << "\n"
                      << "mc_stderr," << cogc::exp::format_double(est.std_error) << "\n";
            if (mc_qa == mc_qb)
                std::cout << "closed_form," << cogc::exp::format_double(closed.p_o)
                          << "\n";
            return kExitOk;
        }
        if (gc_cmd->parsed()) {
            cogc::gc::GcScheme scheme;
            if (!gc_verify.empty()) {
                scheme = cogc::gc::import_scheme_file(gc_verify);
            } else {
                scheme = cogc::gc::construct_gc_scheme(gc_clients, gc_s, gc_seed);
            }
            if (!gc_export.empty()) cogc::gc::export_scheme_file(scheme, gc_export);
            std::cout << "M," << scheme.clients << "\ns," << scheme.tolerance << "\nf,"
                      << scheme.pattern_count() << "\nmax_deviation,"
                      << cogc::exp::format_double(cogc::gc::verify_scheme(scheme))
                      << "\n";
            return kExitOk;
        }
        if (bound_cmd->parsed()) {
            bp.weights.assign(bp.clients, 1.0 / bp.clients);
            bp.dissimilarity.assign(bp.clients, bp_dissim);
            bp.j_terms.assign(1, bp_j);
            const auto report = cogc::bound::theorem_bound(bp);
            std::ofstream file;
            std::ostream* out = &std::cout;
            if (!bound_out.empty()) {
                file.open(bound_out);
                if (!file) throw cogc::ConfigError("cannot open output: " + bound_out);
                out = &file;
            }
            using cogc::exp::format_double;
            *out << "e_r,e_r2,c1,c2,r_max,tail_mass,e_h1,h2,e_h3,e_h4,h5,"
                    "term_gap,term_dissimilarity,term_variance,term_quantization,total\n"
                 << format_double(report.moments.mean) << ','
                 << format_double(report.moments.second_moment) << ','
                 << format_double(report.series.c1) << ','
                 << format_double(report.series.c2) << ',' << report.series.r_max << ','
                 << format_double(report.series.tail_mass) << ','
                 << format_double(report.e_h1) << ',' << format_double(report.h2) << ','
                 << format_double(report.e_h3) << ',' << format_double(report.e_h4)
                 << ',' << format_double(report.h5) << ','
                 << format_double(report.term_gap) << ','
                 << format_double(report.term_dissimilarity) << ','
                 << format_double(report.term_variance) << ','
                 << format_double(report.term_quantization) << ','
                 << format_double(report.total) << '\n';
            return kExitOk;
        }
    } catch (const cogc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const cogc::InvalidParams& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
