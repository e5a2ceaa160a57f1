// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oplora/adapter.hpp"
#include "oplora/densela.hpp"
#include "oplora/error.hpp"
#include "oplora/experiment.hpp"
#include "oplora/format.hpp"
#include "oplora/matrix.hpp"
#include "oplora/metrics.hpp"

namespace {

// Exit-code contract: 0 success, 1 runtime error, 2 usage error,
// 3 assertion-style check failed.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCheckFailed = 3;

/// Raised when an explicit --assert-max-rho / --tolerance gate fails.
struct CheckFailed {
    std::string message;
};

std::size_t svd_size_cap() {
    if (const char* env = std::getenv("OPLORA_SIZE_CAP")) {
        char* end = nullptr;
        const unsigned long long cap = std::strtoull(env, &end, 10);
        if (end && *end == '\0' && cap > 0) {
            return static_cast<std::size_t>(cap);
        }
        std::cerr << "warning: ignoring malformed OPLORA_SIZE_CAP\n";
    }
    return oplora::kDefaultSvdSizeCap;
}

std::vector<std::size_t> parse_k_sweep(const std::string& text) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        const std::string token = text.substr(pos, next - pos);
        if (!token.empty()) {
            out.push_back(static_cast<std::size_t>(std::stoull(token)));
        }
        pos = next + 1;
    }
    if (out.empty()) {
        throw oplora::ParameterError("empty --k-sweep list");
    }
    return out;
}

void emit(const std::string& text, const std::optional<std::string>& out_path) {
    if (out_path) {
        std::ofstream out(*out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw oplora::IoError("cannot write " + *out_path);
        out << text;
        std::cout << *out_path << "\n";
    } else {
        std::cout << text;
    }
}

struct SvdArgs {
    std::string input;
    std::size_t k = 0;
    std::string mode = "exact";
    int oversample = 8;
    int power_iters = 2;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

int cmd_svd(const SvdArgs& args) {
    const oplora::Matrix m = oplora::load_matrix(args.input);
    const oplora::SvdMode mode = oplora::parse_svd_mode(args.mode);

    oplora::SvdFactorization f;
    if (mode == oplora::SvdMode::kExact) {
        f = oplora::svd_exact(m, svd_size_cap());
    } else {
        if (!args.seed) {
            throw oplora::ParameterError("randomized mode requires --seed");
        }
        oplora::RandomizedSvdOptions opts;
        opts.oversample = args.oversample;
        opts.power_iters = args.power_iters;
        opts.seed = *args.seed;
        f = oplora::svd_randomized(m, args.k, opts);
    }

    const std::size_t p = f.sigma.size();
    if (args.k < 1 || args.k > p) {
        throw oplora::RankError("--k must be in [1, " + std::to_string(p) + "]");
    }
    double total = 0.0, head = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        const double e = f.sigma[i] * f.sigma[i];
        total += e;
        if (i < args.k) head += e;
    }
    const double sigma1 = f.sigma[0];
    const bool degenerate = args.k < p && sigma1 > 0.0
                                ? (f.sigma[args.k - 1] - f.sigma[args.k]) < 1e-8 * sigma1
                                : sigma1 == 0.0;

    nlohmann::json report{
        {"sigma", f.sigma},
        {"k", args.k},
        {"energy_fraction_at_k", total > 0.0 ? head / total : 0.0},
        {"degenerate_flag", degenerate},
        {"mode", args.mode},
    };
    emit(report.dump(2) + "\n", args.out);
    return kExitOk;
}

struct RhoArgs {
    std::optional<std::string> w0;
    std::optional<std::string> delta;
    std::optional<std::string> checkpoint;
    std::string k_sweep = "8,16,32,64,128";
    std::string layer = "layer";
    std::optional<double> assert_max_rho;
    std::string out_dir = ".";
};

int cmd_rho(const RhoArgs& args) {
    oplora::Matrix w0, delta;
    if (args.checkpoint) {
        if (args.delta) {
            throw oplora::ParameterError("--delta and --checkpoint are mutually exclusive");
        }
        const oplora::AdapterState state = oplora::load_checkpoint(*args.checkpoint);
        w0 = state.w0;
        delta = oplora::effective_update(state);
    } else {
        if (!args.w0 || !args.delta) {
            throw oplora::ParameterError("need --w0 and --delta, or --checkpoint");
        }
        w0 = oplora::load_matrix(*args.w0);
        delta = oplora::load_matrix(*args.delta);
    }

    const oplora::AlignmentReport report = oplora::rho_sweep(
        w0, delta, parse_k_sweep(args.k_sweep), args.layer, svd_size_cap());

    std::filesystem::create_directories(args.out_dir);
    const auto csv_path = std::filesystem::path(args.out_dir) / "rho.csv";
    const auto json_path = std::filesystem::path(args.out_dir) / "rho.json";
    oplora::write_report_csv(report, csv_path);
    oplora::write_report_json(report, json_path);
    std::cout << csv_path.string() << "\n" << json_path.string() << "\n";

    if (args.assert_max_rho) {
        for (std::size_t i = 0; i < report.rho.size(); ++i) {
            if (report.rho[i] > *args.assert_max_rho) {
                throw CheckFailed{"rho_" + std::to_string(report.k_values[i]) + " = " +
                                  oplora::format_double(report.rho[i]) + " exceeds " +
                                  oplora::format_double(*args.assert_max_rho)};
            }
        }
    }
    return kExitOk;
}

struct ExperimentArgs {
    std::string config;
    std::string out_dir = ".";
    std::optional<std::size_t> jobs;
};

int cmd_experiment(const ExperimentArgs& args) {
    oplora::ExperimentConfig config = oplora::load_experiment_config(args.config);
    if (args.jobs) config.jobs = std::max<std::size_t>(1, *args.jobs);
    const std::vector<oplora::RunResult> runs = oplora::run_experiment(config);
    for (const oplora::RunResult& run : runs) {
        std::cerr << "[run] method=" << run.method << " seed=" << run.seed
                  << (run.failed ? " FAILED: " + run.failure_reason : "")
                  << " wall_ms=" << run.wall_time_ms << "\n";
    }
    oplora::write_experiment_outputs(config, runs, args.out_dir);
    std::cout << (std::filesystem::path(args.out_dir) / "runs.csv").string() << "\n"
              << (std::filesystem::path(args.out_dir) / "summary.json").string() << "\n";
    return kExitOk;
}

struct MergeArgs {
    std::string checkpoint;
    std::optional<std::string> out;
    std::optional<std::string> w_prime; // check only: external W' to verify
    std::optional<std::size_t> k;
    double tolerance = 1e-9;
    bool write_output = false;
};

int cmd_merge_or_check(const MergeArgs& args) {
    const oplora::AdapterState state = oplora::load_checkpoint(args.checkpoint);
    oplora::Matrix merged;
    if (args.w_prime) {
        merged = oplora::load_matrix(*args.w_prime);
        if (!merged.same_shape(state.w0)) {
            throw oplora::DimensionError("--w-prime shape does not match checkpoint w0");
        }
    } else {
        merged = oplora::merge(state);
    }

    std::size_t k = args.k.value_or(state.config.k);
    std::optional<double> residual;
    if (k >= 1 && k < std::min(state.w0.rows(), state.w0.cols())) {
        residual = oplora::preservation_check(state.w0, merged, k, svd_size_cap());
    } else if (args.k) {
        throw oplora::RankError("--k outside [1, min(d_out, d_in))");
    }

    if (args.write_output) {
        if (!args.out) {
            throw oplora::ParameterError("merge requires --out");
        }
        oplora::save_matrix(merged, *args.out);
        std::cout << *args.out << "\n";
    }
    if (residual) {
        std::cout << "preservation_residual " << oplora::format_double(*residual) << "\n";
        const bool gated = args.w_prime.has_value() ||
                           (state.config.method == oplora::Method::kOplora &&
                            state.config.projector_mode == oplora::SvdMode::kExact);
        if (gated && *residual > args.tolerance) {
            throw CheckFailed{"preservation residual " + oplora::format_double(*residual) +
                              " exceeds tolerance " + oplora::format_double(args.tolerance)};
        }
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Orthogonal-projection LoRA toolkit: SVD/rho analysis of weight "
                 "files, adapter checkpoints, and the continual-learning harness"};
    app.require_subcommand(1);

    SvdArgs svd_args;
    auto* svd = app.add_subcommand("svd", "Spectrum report of an OPLR1 weight file");
    svd->add_option("--input", svd_args.input, "OPLR1 matrix file")->required();
    svd->add_option("--k", svd_args.k, "dominant prefix size")->required();
    svd->add_option("--mode", svd_args.mode, "exact|randomized");
    svd->add_option("--oversample", svd_args.oversample, "randomized oversampling");
    svd->add_option("--power-iters", svd_args.power_iters, "randomized power iterations");
    svd->add_option("--seed", svd_args.seed, "RNG seed (required in randomized mode)");
    svd->add_option("--out", svd_args.out, "write JSON report here instead of stdout");

    RhoArgs rho_args;
    auto* rho = app.add_subcommand("rho", "Subspace interference report for an update");
    rho->add_option("--w0", rho_args.w0, "frozen weight OPLR1 file");
    rho->add_option("--delta", rho_args.delta, "update OPLR1 file");
    rho->add_option("--checkpoint", rho_args.checkpoint,
                    "adapter checkpoint directory (uses its effective update)");
    rho->add_option("--k-sweep", rho_args.k_sweep, "comma-separated k values");
    rho->add_option("--layer", rho_args.layer, "layer name for the report");
    rho->add_option("--assert-max-rho", rho_args.assert_max_rho,
                    "exit 3 if any rho exceeds this");
    rho->add_option("--out-dir", rho_args.out_dir, "directory for rho.csv / rho.json");

    ExperimentArgs exp_args;
    auto* exp = app.add_subcommand("experiment", "Run the continual-learning harness");
    exp->add_option("--config", exp_args.config, "experiment config JSON")->required();
    exp->add_option("--out-dir", exp_args.out_dir, "directory for runs.csv / summary.json");
    exp->add_option("--jobs", exp_args.jobs, "parallel seed workers");

    MergeArgs merge_args;
    auto* merge = app.add_subcommand("merge", "Write W_frozen + update as OPLR1");
    merge->add_option("--checkpoint", merge_args.checkpoint, "adapter checkpoint")->required();
    merge->add_option("--out", merge_args.out, "output OPLR1 path")->required();
    merge->add_option("--k", merge_args.k, "preservation check rank");
    merge->add_option("--tolerance", merge_args.tolerance, "residual gate (default 1e-9)");

    MergeArgs check_args;
    auto* check = app.add_subcommand("check", "Preservation residual of a checkpoint");
    check->add_option("--checkpoint", check_args.checkpoint, "adapter checkpoint")->required();
    check->add_option("--w-prime", check_args.w_prime, "verify this OPLR1 file instead of merging");
    check->add_option("--k", check_args.k, "preservation check rank");
    check->add_option("--tolerance", check_args.tolerance, "residual gate (default 1e-9)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (svd->parsed()) return cmd_svd(svd_args);
        if (rho->parsed()) return cmd_rho(rho_args);
        if (exp->parsed()) return cmd_experiment(exp_args);
        if (merge->parsed()) {
            merge_args.write_output = true;
            return cmd_merge_or_check(merge_args);
        }
        if (check->parsed()) return cmd_merge_or_check(check_args);
        std::cerr << "no subcommand\n";
        return kExitUsage;
    } catch (const CheckFailed& e) {
        std::cerr << "check failed: " << e.message << "\n";
        return kExitCheckFailed;
    } catch (const oplora::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const oplora::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const oplora::DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const oplora::ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const oplora::RankError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const oplora::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const oplora::SizeCapError& e) {
        std::cerr << "error: " << e.what()
                  << " (hint: use --mode randomized or raise OPLORA_SIZE_CAP)\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
