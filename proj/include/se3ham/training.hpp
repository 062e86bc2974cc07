// Trajectory-matching losses, the training loop and post-training sweeps.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "se3ham/envs.hpp"
#include "se3ham/hammodel.hpp"
#include "se3ham/nn.hpp"

namespace se3ham {

struct LossBreakdown {
    double L_R = 0.0;
    double L_p = 0.0;
    double L_zeta = 0.0;
    double total = 0.0;
};

/// sum_n |log(Rbar_n R_n^T)^vee|^2
double orientation_loss(const std::vector<Mat3> &Rbar, const std::vector<Mat3> &R);

/// {sum |pbar - p|^2, sum |zbar - z|^2}
std::pair<double, double> position_velocity_losses(const std::vector<Eigen::VectorXd> &pbar,
                                                   const std::vector<Eigen::VectorXd> &p,
                                                   const std::vector<Eigen::VectorXd> &zbar,
                                                   const std::vector<Eigen::VectorXd> &z);

struct TrainConfig {
    int iterations = 1000;
    /// Records per iteration; 0 uses the whole dataset.
    int batch_size = 128;
    /// Records per tape; bounds memory.
    int shard_size = 64;
    /// RK4 steps per sample interval.
    int substeps = 2;
    std::uint64_t seed = 0;
    std::string optimizer = "adam";
    AdamConfig adam;
    double sgd_lr = 1e-3;
    int threads = 1;
    bool pretrain_mass = false;
    int pretrain_iterations = 1000;
    int pretrain_batch = 256;
    double pretrain_lr = 1e-3;
    /// Loss above this (per record) counts as divergence.
    double divergence_threshold = 1e10;
    std::size_t max_tape_nodes = 20'000'000;
    /// Iterations already completed by a resumed model; numbering continues from here.
    int start_iteration = 0;
    /// Optimizer moments carried over from a checkpoint.
    std::optional<AdamState> resume_adam;
};

struct HistoryRow {
    int iteration = 0;
    LossBreakdown loss;
};

struct TrainResult {
    HamiltonianModel model;
    std::vector<HistoryRow> history;
    bool diverged = false;
    std::string message;
    /// Total iterations the model has seen, including resumed ones.
    int iterations_done = 0;
    AdamState adam;
    double pretrain_error_M1 = 0.0;
    double pretrain_error_M2 = 0.0;
};

struct BatchEvaluation {
    /// Per-record averages of the summed losses.
    LossBreakdown loss;
    ParamVector grad;
};

/// Loss (and, when requested, its parameter gradient) over the records in idx.
BatchEvaluation evaluate_batch(const HamiltonianModel &model, const Dataset &ds, const std::vector<int> &idx,
                               const TrainConfig &cfg, bool with_grad);

using TrainCallback = std::function<void(const HistoryRow &)>;

TrainResult train(HamiltonianModel model, const Dataset &ds, const TrainConfig &cfg,
                  const TrainCallback &callback = {});

/// Pretrains both mass nets of a learned model towards the identity.
std::pair<double, double> pretrain_mass_nets(HamiltonianModel &model, const Dataset &ds, const TrainConfig &cfg);

/// Largest |u_j| over the dataset, per channel.
Eigen::VectorXd control_scale(const Dataset &ds);

struct LearnedSample {
    Eigen::VectorXd q;
    Mat3 M1_inv;
    Mat3 M2_inv;
    double V = 0.0;
    Eigen::MatrixXd g;
};

std::vector<LearnedSample> evaluate_learned_functions(const HamiltonianModel &model,
                                                      const std::vector<Eigen::VectorXd> &qs);

struct PendulumSweep {
    std::vector<double> phi;
    std::vector<double> product; // [M2^-1]_33 [g]_3
    std::vector<double> dV;      // V(phi) - V(0)
    double mean_product = 0.0;
    double beta = 0.0;
    double potential_rms_rel = 0.0;
};

PendulumSweep pendulum_sweep(const HamiltonianModel &model, const PendulumParams &truth, int points = 64);

/// sqrt(sum |zdot_hat - zdot|^2 / sum |zdot|^2) over held-out states.
double rhs_relative_error(const HamiltonianModel &model, const DatasetConfig &cfg, int states,
                          std::uint64_t stream_offset = 1'000'000'000ULL);

struct RigidBodyStructure {
    double alpha = 0.0; // learned M2^-1 / J^-1
    double beta = 0.0;  // learned M1^-1 / (1/m)
    /// Worst off-diagonal over dominant diagonal of the scaled matrices.
    double M1_offdiag = 0.0;
    double M2_offdiag = 0.0;
    /// Per row, off-target response to typical controls over the diagonal one.
    double g_offdiag = 0.0;
    Mat3 M1_scaled = Mat3::Zero();
    Mat3 M2_scaled = Mat3::Zero();
    Eigen::MatrixXd g_scaled;
};

RigidBodyStructure rigid_body_structure(const HamiltonianModel &model, const DatasetConfig &cfg, int states,
                                        std::uint64_t stream_offset = 2'000'000'000ULL);

} // namespace se3ham
