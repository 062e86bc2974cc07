// Fixed-step RK4 integration, numerically and on the AD tape.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "se3ham/hammodel.hpp"

namespace se3ham {

/// x_dot = f(t, x, u) on a flat state vector.
using VectorField = std::function<Eigen::VectorXd(double, const Eigen::VectorXd &, const Eigen::VectorXd &)>;

Eigen::VectorXd rk4_step(const VectorField &f, double t, const Eigen::VectorXd &x, const Eigen::VectorXd &u,
                         double dt);

struct RolloutOptions {
    /// RK4 steps per sample interval.
    int substeps = 1;
    /// Offset of the 9 rotation rows inside the flat state, or -1.
    int rotation_offset = -1;
    /// Project the rotation back onto SO(3) after every step.
    bool project = false;
};

struct RolloutResult {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;
    /// |R R^T - I|_F and |det R - 1| at each sample, when a rotation is present.
    std::vector<double> orthogonality_drift;
    std::vector<double> determinant_drift;
};

/// Integrates from x0 = x(times[0]) with u held constant, returning every
/// sample time. Throws NonFinite when the state blows up.
RolloutResult rollout(const VectorField &f, const Eigen::VectorXd &x0, const Eigen::VectorXd &u,
                      const std::vector<double> &times, const RolloutOptions &opt);

/// Flat [q; zeta] vector field of a model.
VectorField model_field(const HamiltonianModel &model);

struct TapeTrajectory {
    std::vector<ad::Var> q;
    std::vector<ad::Var> zeta;
};

/// Batched RK4 rollout recorded on the tape; entry 0 is the initial state.
TapeTrajectory rollout_tape(const BoundModel &model, const ad::Var &q0, const ad::Var &zeta0, const ad::Var &u,
                            const std::vector<double> &times, int substeps);

struct GradRollout {
    RolloutResult result;
    ParamVector grad_params;
};

/// Rollout plus the gradient of sum_n adjoints[n]^T x_n with respect to the
/// model parameters, by reverse-mode through the unrolled RK4 steps.
GradRollout rollout_with_grad(const HamiltonianModel &model, const FullState &x0, const Eigen::VectorXd &u,
                              const std::vector<double> &times, int substeps,
                              const std::vector<Eigen::VectorXd> &loss_adjoints, std::size_t max_nodes = 20'000'000);

/// Least-squares slope of log(error) against log(dt).
double observed_order(const std::vector<double> &dts, const std::vector<double> &errors);

} // namespace se3ham
