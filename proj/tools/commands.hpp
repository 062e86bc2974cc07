// Command implementations behind the se3ham executable. The acceptance suite
// calls the same functions.
#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

#include "se3ham/config.hpp"
#include "se3ham/control.hpp"
#include "se3ham/io.hpp"
#include "se3ham/training.hpp"

namespace se3ham::cli {

/// --threads if positive, else SE3HAM_THREADS, else 1.
int resolve_threads(int flag);

/// Fresh networks for the configured system, with control normalization
/// from the dataset when enabled.
HamiltonianModel new_learned_model(const RunConfig &cfg, const Dataset &ds);

struct TrainOutcome {
    TrainResult result;
    Checkpoint checkpoint;
};

TrainOutcome train_model(const RunConfig &cfg, const Dataset &ds, const std::optional<Checkpoint> &resume,
                         int threads);

struct EvalOutcome {
    nlohmann::json summary;
    std::vector<std::string> function_header;
    std::vector<std::vector<double>> functions;
    /// t, H, orth_err, det_err of the zero-input rollout.
    std::vector<std::vector<double>> energy;
};

EvalOutcome evaluate_model(const RunConfig &cfg, const HamiltonianModel &model);

struct ControlOutcome {
    ClosedLoopResult result;
    nlohmann::json summary;
};

/// Closed loop on the ground-truth plant with the given model behind the controller.
ControlOutcome run_control(const RunConfig &cfg, const HamiltonianModel &model);

/// Maps an error to the exit-code contract: 2 config, 3 I/O, 4 divergence.
int exit_code(const Error &e);

int cli_main(int argc, char **argv);

} // namespace se3ham::cli
