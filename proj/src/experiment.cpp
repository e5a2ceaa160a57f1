// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#include "oplora/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "oplora/error.hpp"
#include "oplora/format.hpp"
#include "oplora/kernels.hpp"
#include "oplora/rng.hpp"

namespace oplora {
namespace {

// Sub-stream tags for derive_seed.
constexpr std::uint64_t kTagTeacher = 1;
constexpr std::uint64_t kTagData = 2;
constexpr std::uint64_t kTagNoise = 3;
constexpr std::uint64_t kTagPerturb = 4;
constexpr std::uint64_t kTagAdapterInit = 5;
constexpr std::uint64_t kTagProjector = 6;

void validate_task(const TaskSpec& spec) {
    if (spec.d_in == 0 || spec.d_out == 0) {
        throw ParameterError("task dimensions must be positive");
    }
    if (spec.n_train == 0) {
        throw ParameterError("task needs at least one training sample");
    }
    if (spec.noise_std < 0.0) {
        throw ParameterError("noise_std must be nonnegative");
    }
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix m(rows, cols);
    Xoshiro256pp rng(seed);
    fill_gaussian(m, rng);
    return m;
}

} // namespace

const char* optimizer_name(OptimizerConfig::Algo algo) {
    return algo == OptimizerConfig::Algo::kSgd ? "sgd" : "adam";
}

OptimizerConfig::Algo parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerConfig::Algo::kSgd;
    if (name == "adam") return OptimizerConfig::Algo::kAdam;
    throw ParameterError("unknown optimizer: " + name);
}

void optimizer_step(Matrix& param, const Matrix& grads, AdamState& state,
                    std::size_t t, const OptimizerConfig& opt) {
    if (!param.same_shape(grads)) {
        throw DimensionError("optimizer_step: parameter and gradient shapes differ");
    }
    if (opt.algo == OptimizerConfig::Algo::kSgd) {
        param.add_scaled(-opt.lr, grads);
        return;
    }
    if (state.m.empty()) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
    }
    if (t == 0) {
        throw ParameterError("optimizer_step: Adam step index is 1-based");
    }
    kernels::scale(state.m.data(), state.m.data(), opt.beta1, state.m.size());
    kernels::axpy(state.m.data(), 1.0 - opt.beta1, grads.data(), state.m.size());
    for (std::size_t i = 0; i < state.v.size(); ++i) {
        const double g = grads.data()[i];
        state.v.data()[i] = opt.beta2 * state.v.data()[i] + (1.0 - opt.beta2) * g * g;
    }
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double mhat = state.m.data()[i] / c1;
        const double vhat = state.v.data()[i] / c2;
        param.data()[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
}

Matrix make_teacher(const TaskSpec& spec) {
    validate_task(spec);
    const std::size_t p = std::min(spec.d_out, spec.d_in);
    Xoshiro256pp rng(derive_seed(spec.teacher_seed, kTagTeacher));

    Matrix gu(spec.d_out, spec.d_out);
    fill_gaussian(gu, rng);
    Matrix gv(spec.d_in, spec.d_in);
    fill_gaussian(gv, rng);
    const Matrix qu = take_columns(qr_decompose(gu).q, 0, p);
    const Matrix qv = take_columns(qr_decompose(gv).q, 0, p);

    std::vector<double> spectrum(p);
    double value = kTeacherScale;
    for (std::size_t i = 0; i < p; ++i) {
        spectrum[i] = value;
        value *= kTeacherDecay;
    }
    return qu * Matrix::diagonal(p, p, spectrum) * qv.transposed();
}

Dataset generate_dataset(const Matrix& teacher, const TaskSpec& spec) {
    validate_task(spec);
    if (teacher.rows() != spec.d_out || teacher.cols() != spec.d_in) {
        throw DimensionError("generate_dataset: teacher shape does not match spec");
    }
    Xoshiro256pp data_rng(derive_seed(spec.teacher_seed, kTagData));
    Xoshiro256pp noise_rng(derive_seed(spec.teacher_seed, kTagNoise));

    Dataset set;
    set.x_train = Matrix(spec.d_in, spec.n_train);
    fill_gaussian(set.x_train, data_rng);
    set.x_eval = Matrix(spec.d_in, spec.n_eval);
    fill_gaussian(set.x_eval, data_rng);

    const auto targets = [&](const Matrix& x) {
        Matrix y = teacher * x;
        if (spec.noise_std > 0.0) {
            Matrix noise(y.rows(), y.cols());
            fill_gaussian(noise, noise_rng);
            y.add_scaled(spec.noise_std, noise);
        }
        return y;
    };
    set.y_train = targets(set.x_train);
    set.y_eval = targets(set.x_eval);
    return set;
}

Dataset generate_task(const TaskSpec& spec) {
    return generate_dataset(make_teacher(spec), spec);
}

double mse_loss(const Matrix& prediction, const Matrix& target) {
    if (!prediction.same_shape(target)) {
        throw DimensionError("mse_loss: shapes differ");
    }
    const Matrix residual = prediction - target;
    const double total = kernels::dot(residual.data(), residual.data(), residual.size());
    return total / static_cast<double>(residual.size());
}

PretrainResult pretrain(const TaskSpec& spec_a) {
    const Dataset data = generate_task(spec_a);
    const std::size_t n = spec_a.n_train;
    const double denom = static_cast<double>(n * spec_a.d_out);

    // Curvature bound of the quadratic loss; 1/L guarantees monotone descent.
    const double sigma_x = svd_exact(data.x_train).sigma[0];
    const double lipschitz = 2.0 * sigma_x * sigma_x / denom;
    const double lr = 1.0 / lipschitz;

    PretrainResult result;
    result.w0 = Matrix(spec_a.d_out, spec_a.d_in);
    for (result.steps = 0; result.steps < kPretrainMaxSteps; ++result.steps) {
        const Matrix residual = result.w0 * data.x_train - data.y_train;
        Matrix grads = multiply_transpose(residual, data.x_train);
        grads *= 2.0 / denom;
        result.grad_norm = grads.frobenius_norm();
        if (result.grad_norm <= kPretrainGradTol) {
            result.converged = true;
            break;
        }
        result.w0.add_scaled(-lr, grads);
    }
    result.loss = mse_loss(result.w0 * data.x_train, data.y_train);
    return result;
}

RunResult adapt_and_measure(const Matrix& w0, const TaskSpec& spec_a,
                            const TaskSpec& spec_b, const ConflictSpec& conflict,
                            const AdapterConfig& adapter_config,
                            const OptimizerConfig& opt,
                            const std::vector<std::size_t>& k_sweep) {
    const auto start = std::chrono::steady_clock::now();
    if (spec_b.d_in != spec_a.d_in || spec_b.d_out != spec_a.d_out) {
        throw DimensionError("adapt_and_measure: task dimensions differ");
    }

    // Task B teacher: task A's teacher plus a seeded perturbation split
    // between the dominant subspace of w0 and its double-sided complement.
    const Matrix teacher_a = make_teacher(spec_a);
    Matrix teacher_b = teacher_a;
    {
        const double base_norm = teacher_a.frobenius_norm();
        const SvdFactorization f0 = svd_exact(w0);
        Xoshiro256pp rng(derive_seed(spec_b.teacher_seed, kTagPerturb));
        if (conflict.level > 0.0 && conflict.k >= 1) {
            const Matrix u_c = take_columns(f0.u, 0, conflict.k);
            Matrix g(conflict.k, spec_a.d_in);
            fill_gaussian(g, rng);
            Matrix top = u_c * g;
            top *= conflict.level * base_norm / top.frobenius_norm();
            teacher_b += top;
        }
        if (conflict.orthogonal_level > 0.0 && conflict.orthogonal_k >= 1) {
            const Matrix u_o = take_columns(f0.u, 0, conflict.orthogonal_k);
            const Matrix v_o = take_columns(f0.v, 0, conflict.orthogonal_k);
            Matrix g(spec_a.d_out, spec_a.d_in);
            fill_gaussian(g, rng);
            Matrix orth = complement_left(u_o, complement_right(g, v_o));
            orth *= conflict.orthogonal_level * base_norm / orth.frobenius_norm();
            teacher_b += orth;
        }
    }

    const Dataset data_a = generate_task(spec_a);
    const Dataset data_b = generate_dataset(teacher_b, spec_b);

    RunResult result;
    result.method = method_name(adapter_config.method);
    AdapterState state = init_adapter(w0, adapter_config);

    result.task_a_loss_before = mse_loss(forward(state, data_a.x_eval), data_a.y_eval);
    result.task_b_loss_init = mse_loss(forward(state, data_b.x_eval), data_b.y_eval);

    const double upstream_scale =
        2.0 / static_cast<double>(spec_b.n_train * spec_b.d_out);
    AdamState opt_a, opt_b;
    for (std::size_t t = 1; t <= opt.steps; ++t) {
        const Matrix prediction = forward(state, data_b.x_train);
        if (!prediction.all_finite()) {
            result.failed = true;
            result.failure_reason = "divergence: non-finite forward output at step " +
                                    std::to_string(t);
            break;
        }
        Matrix upstream = prediction - data_b.y_train;
        upstream *= upstream_scale;
        const AdapterGrads grads = grad(state, data_b.x_train, upstream);
        optimizer_step(state.a, grads.a, opt_a, t, opt);
        optimizer_step(state.b, grads.b, opt_b, t, opt);
    }

    if (!result.failed) {
        result.task_b_loss = mse_loss(forward(state, data_b.x_eval), data_b.y_eval);
        result.task_a_loss_after = mse_loss(forward(state, data_a.x_eval), data_a.y_eval);
        const Matrix update = effective_update(state);
        if (update.frobenius_norm() > 0.0) {
            result.rho_report =
                rho_sweep(w0, update, k_sweep, method_name(adapter_config.method));
        } else {
            result.rho_report.layer_name = method_name(adapter_config.method);
            result.rho_report.update_norm = 0.0; // rho undefined for a zero update
        }
    }

    result.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
    return result;
}

namespace {

TaskSpec task_for_seed(TaskSpec spec, std::uint64_t run_seed) {
    spec.teacher_seed = derive_seed(spec.teacher_seed, run_seed);
    return spec;
}

} // namespace

std::vector<RunResult> run_experiment(const ExperimentConfig& config) {
    const std::size_t n_seeds = config.seeds.size();
    const std::size_t n_methods = config.methods.size();
    std::vector<RunResult> results(n_seeds * n_methods);
    if (n_seeds == 0 || n_methods == 0) return {};

    const std::vector<std::size_t> k_sweep =
        clip_k_sweep(config.k_sweep, config.task_a.d_out, config.task_a.d_in);

    const auto run_seed_block = [&](std::size_t seed_idx) {
        const std::uint64_t run_seed = config.seeds[seed_idx];
        const TaskSpec spec_a = task_for_seed(config.task_a, run_seed);
        const TaskSpec spec_b = task_for_seed(config.task_b, run_seed);
        const PretrainResult pre = pretrain(spec_a);

        for (std::size_t m = 0; m < n_methods; ++m) {
            AdapterConfig acfg = config.adapter;
            acfg.method = config.methods[m];
            acfg.seed = derive_seed(run_seed, kTagAdapterInit);
            if (acfg.projector_mode == SvdMode::kRandomized) {
                acfg.randomized.seed = derive_seed(run_seed, kTagProjector);
            }
            RunResult run;
            try {
                run = adapt_and_measure(pre.w0, spec_a, spec_b, config.conflict, acfg,
                                        config.optimizer, k_sweep);
            } catch (const Error& e) {
                run.method = method_name(acfg.method);
                run.failed = true;
                run.failure_reason = e.what();
            }
            run.seed = run_seed;
            results[m * n_seeds + seed_idx] = std::move(run);
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(config.jobs, n_seeds));
    if (workers == 1) {
        for (std::size_t s = 0; s < n_seeds; ++s) run_seed_block(s);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t s = next.fetch_add(1); s < n_seeds; s = next.fetch_add(1)) {
                    run_seed_block(s);
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    return results;
}

std::string runs_csv(const std::vector<RunResult>& runs,
                     const std::vector<std::size_t>& k_sweep) {
    std::ostringstream os;
    os << "method,seed,task_b_loss_init,task_b_loss,task_a_loss_before,"
          "task_a_loss_after,forgetting_delta,update_norm,preservation_residual";
    for (std::size_t k : k_sweep) os << ",rho_" << k;
    os << ",failed\n";

    for (const RunResult& run : runs) {
        os << run.method << ',' << run.seed << ',';
        if (run.failed) {
            os << ",,,,,,";
            for (std::size_t i = 0; i < k_sweep.size(); ++i) os << ',';
            os << "1\n";
            continue;
        }
        os << format_double(run.task_b_loss_init) << ',' << format_double(run.task_b_loss)
           << ',' << format_double(run.task_a_loss_before) << ','
           << format_double(run.task_a_loss_after) << ','
           << format_double(run.forgetting_delta()) << ','
           << format_double(run.rho_report.update_norm) << ',';
        const bool has_rho = !run.rho_report.k_values.empty();
        if (has_rho) os << format_double(run.rho_report.preservation_residual);
        for (std::size_t k : k_sweep) {
            os << ',';
            if (!has_rho) continue;
            const auto& ks = run.rho_report.k_values;
            const auto it = std::find(ks.begin(), ks.end(), k);
            if (it != ks.end()) {
                os << format_double(run.rho_report.rho[static_cast<std::size_t>(
                    it - ks.begin())]);
            }
        }
        os << ",0\n";
    }
    return os.str();
}

namespace {

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace

std::string experiment_summary_json(const ExperimentConfig& config,
                                    const std::vector<RunResult>& runs) {
    const std::vector<std::size_t> k_sweep =
        clip_k_sweep(config.k_sweep, config.task_a.d_out, config.task_a.d_in);

    nlohmann::json per_method = nlohmann::json::object();
    for (Method method : config.methods) {
        const std::string name = method_name(method);
        std::vector<double> b_loss, forgetting;
        std::vector<std::vector<double>> rho_by_k(k_sweep.size());
        std::size_t failed = 0, total = 0;
        for (const RunResult& run : runs) {
            if (run.method != name) continue;
            ++total;
            if (run.failed) {
                ++failed;
                continue;
            }
            b_loss.push_back(run.task_b_loss);
            forgetting.push_back(run.forgetting_delta());
            for (std::size_t i = 0; i < k_sweep.size(); ++i) {
                const auto& ks = run.rho_report.k_values;
                const auto it = std::find(ks.begin(), ks.end(), k_sweep[i]);
                if (it != ks.end()) {
                    rho_by_k[i].push_back(
                        run.rho_report.rho[static_cast<std::size_t>(it - ks.begin())]);
                }
            }
        }
        nlohmann::json mean_rho = nlohmann::json::object();
        for (std::size_t i = 0; i < k_sweep.size(); ++i) {
            if (rho_by_k[i].empty()) continue;
            double sum = 0.0;
            for (double v : rho_by_k[i]) sum += v;
            mean_rho[std::to_string(k_sweep[i])] = sum / static_cast<double>(rho_by_k[i].size());
        }
        per_method[name] = {
            {"runs", total},
            {"failed", failed},
            {"median_task_b_loss", median(b_loss)},
            {"median_forgetting_delta", median(forgetting)},
            {"mean_rho", mean_rho},
        };
    }

    nlohmann::json j{
        {"seeds", config.seeds},
        {"k_sweep", k_sweep},
        {"optimizer", optimizer_name(config.optimizer.algo)},
        {"steps", config.optimizer.steps},
        {"per_method", per_method},
    };
    return j.dump(2) + "\n";
}

void write_experiment_outputs(const ExperimentConfig& config,
                              const std::vector<RunResult>& runs,
                              const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::vector<std::size_t> k_sweep =
        clip_k_sweep(config.k_sweep, config.task_a.d_out, config.task_a.d_in);
    {
        std::ofstream out(out_dir / "runs.csv", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (out_dir / "runs.csv").string());
        out << runs_csv(runs, k_sweep);
    }
    {
        std::ofstream out(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (out_dir / "summary.json").string());
        out << experiment_summary_json(config, runs);
    }
}

namespace {

TaskSpec parse_task(const nlohmann::json& j) {
    TaskSpec spec;
    spec.d_in = j.at("d_in").get<std::size_t>();
    spec.d_out = j.at("d_out").get<std::size_t>();
    if (j.contains("hidden")) spec.hidden = j.at("hidden").get<std::size_t>();
    spec.teacher_seed = j.at("teacher_seed").get<std::uint64_t>();
    spec.noise_std = j.value("noise_std", 0.0);
    spec.n_train = j.at("n_train").get<std::size_t>();
    spec.n_eval = j.at("n_eval").get<std::size_t>();
    return spec;
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    try {
        const nlohmann::json j = nlohmann::json::parse(text);
        ExperimentConfig config;
        config.task_a = parse_task(j.at("task_a"));
        config.task_b = parse_task(j.at("task_b"));

        if (j.contains("conflict")) {
            const auto& c = j.at("conflict");
            config.conflict.k = c.value("k", config.conflict.k);
            config.conflict.level = c.value("level", config.conflict.level);
            config.conflict.orthogonal_k = c.value("orthogonal_k", config.conflict.orthogonal_k);
            config.conflict.orthogonal_level =
                c.value("orthogonal_level", config.conflict.orthogonal_level);
        }

        const auto& a = j.at("adapter");
        config.adapter.r = a.at("r").get<std::size_t>();
        config.adapter.alpha = a.at("alpha").get<double>();
        config.adapter.k = a.at("k").get<std::size_t>();
        config.adapter.projector_mode = parse_svd_mode(a.value("mode", "exact"));
        config.adapter.randomized.oversample = a.value("oversample", 8);
        config.adapter.randomized.power_iters = a.value("power_iters", 2);

        const auto& o = j.at("optimizer");
        config.optimizer.algo = parse_optimizer(o.value("algo", "adam"));
        config.optimizer.lr = o.at("lr").get<double>();
        config.optimizer.steps = o.at("steps").get<std::size_t>();
        config.optimizer.beta1 = o.value("beta1", 0.9);
        config.optimizer.beta2 = o.value("beta2", 0.999);
        config.optimizer.eps = o.value("eps", 1e-8);

        config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("k_sweep")) {
            config.k_sweep = j.at("k_sweep").get<std::vector<std::size_t>>();
        }
        if (j.contains("methods")) {
            config.methods.clear();
            for (const auto& name : j.at("methods")) {
                config.methods.push_back(parse_method(name.get<std::string>()));
            }
        }
        return config;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid experiment config: " + std::string(e.what()));
    } catch (const ParameterError& e) {
        throw FormatError("invalid experiment config: " + std::string(e.what()));
    }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read experiment config: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_config(buffer.str());
}

} // namespace oplora
