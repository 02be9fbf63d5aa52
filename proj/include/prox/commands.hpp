#pragma once

#include <memory>
#include <string>

#include "prox/config.hpp"
#include "prox/datasets.hpp"
#include "prox/linops.hpp"
#include "prox/prior.hpp"
#include "prox/solver.hpp"

namespace prox {

// Measurement operator for the configured task at the given image geometry.
// Mask-style tasks derive their randomness from `seed`.
LinearOperator task_operator(const ExperimentConfig& cfg, const std::string& task, int h, int w,
                             int c, std::uint64_t seed);

// Measurement-noise std in measurement units (the denoise task converts its
// 0..255-scale sigma).
double task_sigma(const ExperimentConfig& cfg, const std::string& task);

// Explicit config rho, else the denoise preset, else 0.3.
double solve_rho(const ExperimentConfig& cfg, const std::string& task);

// Per-task benchmark defaults when the config leaves rho at 0.
double bench_rho(const ExperimentConfig& cfg, const std::string& task);

// Prior for one solve. The shared projector pair must be non-null when
// cfg.prior (or `prior`) is "projector".
ProxOperator build_prior(const ExperimentConfig& cfg, const std::string& prior, int h, int w,
                         int c, std::shared_ptr<const ProjectionNetworkPair> model);

DatasetHandle load_configured_dataset(const ExperimentConfig& cfg);

// Subcommands. They throw on errors; the CLI maps exceptions to exit codes.
void cmd_train(const ExperimentConfig& cfg);
void cmd_solve(const ExperimentConfig& cfg);
void cmd_bench(const ExperimentConfig& cfg);
// Returns true when every check passed.
bool cmd_check(const std::string& kind);

}  // namespace prox
