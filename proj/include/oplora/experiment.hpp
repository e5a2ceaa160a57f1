// Copyright (C) 2026 OPLoRA contributors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oplora/adapter.hpp"
#include "oplora/matrix.hpp"
#include "oplora/metrics.hpp"

namespace oplora {

/// Linear teacher-student regression task: y = T x + noise.
struct TaskSpec {
    std::size_t d_in = 48;
    std::size_t d_out = 64;
    std::optional<std::size_t> hidden; // reserved for nonlinear tasks; unused
    std::uint64_t teacher_seed = 0;
    double noise_std = 0.0;
    std::size_t n_train = 256;
    std::size_t n_eval = 512;
};

struct Dataset {
    Matrix x_train; // d_in x n_train
    Matrix y_train; // d_out x n_train
    Matrix x_eval;  // d_in x n_eval
    Matrix y_eval;  // d_out x n_eval
};

/// How task B's teacher deviates from task A's. The conflicting component
/// lives in the top-`k` left singular subspace of w0 (so an unconstrained
/// adapter is pressured to overwrite dominant directions); a second
/// component lives in the double-sided complement at `orthogonal_k`, which
/// every method can reach. Levels are Frobenius fractions of ||T_A||_F.
struct ConflictSpec {
    std::size_t k = 4;
    double level = 0.5;
    std::size_t orthogonal_k = 16;
    double orthogonal_level = 0.25;
};

struct OptimizerConfig {
    enum class Algo { kSgd, kAdam };
    Algo algo = Algo::kAdam;
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t steps = 500;
};

const char* optimizer_name(OptimizerConfig::Algo algo);
OptimizerConfig::Algo parse_optimizer(const std::string& name);

/// First/second moment accumulators for one parameter matrix.
struct AdamState {
    Matrix m;
    Matrix v;
};

/// One optimizer update in place. `t` is the 1-based step index used for
/// Adam bias correction; SGD ignores `state` and `t`.
void optimizer_step(Matrix& param, const Matrix& grads, AdamState& state,
                    std::size_t t, const OptimizerConfig& opt);

/// Teacher with a geometrically decaying spectrum (ratio kTeacherDecay) and
/// seeded random singular bases. The decay mirrors how trained-network
/// spectra concentrate energy in leading directions and keeps the top-k
/// subspaces of the pretrained weight well separated.
Matrix make_teacher(const TaskSpec& spec);

inline constexpr double kTeacherDecay = 0.8;
inline constexpr double kTeacherScale = 4.0;

/// Draws x ~ N(0, I) and y = teacher * x + noise_std * N(0, I), train split
/// first, then eval, from streams derived from spec.teacher_seed.
Dataset generate_dataset(const Matrix& teacher, const TaskSpec& spec);

/// make_teacher + generate_dataset.
Dataset generate_task(const TaskSpec& spec);

/// Mean squared error per output coordinate: ||W x - y||_F^2 / (n * d_out).
double mse_loss(const Matrix& prediction, const Matrix& target);

struct PretrainResult {
    Matrix w0;
    bool converged = false;
    std::size_t steps = 0;
    double grad_norm = 0.0;
    double loss = 0.0;
};

inline constexpr double kPretrainGradTol = 1e-8;
inline constexpr std::size_t kPretrainMaxSteps = 10000;

/// Full-batch gradient descent on task A's training split, step size
/// 1/L with L the loss curvature bound from sigma_max(X). Stops at
/// grad norm <= kPretrainGradTol or kPretrainMaxSteps.
PretrainResult pretrain(const TaskSpec& spec_a);

struct RunResult {
    std::string method;
    std::uint64_t seed = 0;
    double task_b_loss_init = 0.0;
    double task_b_loss = 0.0;
    double task_a_loss_before = 0.0;
    double task_a_loss_after = 0.0;
    AlignmentReport rho_report; // empty k_values when the update is zero
    std::int64_t wall_time_ms = 0; // informational; excluded from reports
    bool failed = false;
    std::string failure_reason;

    double forgetting_delta() const { return task_a_loss_after - task_a_loss_before; }
};

/// Trains A, B on task B with the configured method and optimizer, then
/// measures task-B fit, task-A forgetting, and the rho sweep of the final
/// effective update against w0. Divergence marks the run failed instead of
/// throwing.
RunResult adapt_and_measure(const Matrix& w0, const TaskSpec& spec_a,
                            const TaskSpec& spec_b, const ConflictSpec& conflict,
                            const AdapterConfig& adapter_config,
                            const OptimizerConfig& opt,
                            const std::vector<std::size_t>& k_sweep);

struct ExperimentConfig {
    TaskSpec task_a;
    TaskSpec task_b;
    ConflictSpec conflict;
    AdapterConfig adapter; // method and seed are overridden per run
    OptimizerConfig optimizer;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> k_sweep = default_k_sweep();
    std::vector<Method> methods{Method::kLora, Method::kPissa, Method::kMilora,
                                Method::kOplora};
    std::size_t jobs = 1;
};

/// Parses the run-config JSON; throws FormatError on any schema problem.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(const std::string& text);

/// Runs methods x seeds. One pretrain per seed is shared by all methods of
/// that seed; seeds may run in parallel workers (config.jobs), results are
/// merged in deterministic (method, seed) order.
std::vector<RunResult> run_experiment(const ExperimentConfig& config);

/// CSV: method,seed,task_b_loss_init,task_b_loss,task_a_loss_before,
/// task_a_loss_after,forgetting_delta,update_norm,preservation_residual,
/// rho_<k>...,failed. Failed or undefined cells are left empty.
std::string runs_csv(const std::vector<RunResult>& runs,
                     const std::vector<std::size_t>& k_sweep);

/// Per-method medians and mean rho values.
std::string experiment_summary_json(const ExperimentConfig& config,
                                    const std::vector<RunResult>& runs);

void write_experiment_outputs(const ExperimentConfig& config,
                              const std::vector<RunResult>& runs,
                              const std::filesystem::path& out_dir);

} // namespace oplora
