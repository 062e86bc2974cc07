// Small fully connected networks on the AD tape: tanh hidden layers and a
// linear output layer, plus the Cholesky mass head and the Adam optimizer.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "se3ham/ad/tape.hpp"

namespace se3ham {

using ParamVector = Eigen::VectorXd;

struct MlpSpec {
    /// Layer widths including input and output, e.g. {9, 64, 64, 6}.
    std::vector<int> widths;

    int inputs() const { return widths.front(); }
    int outputs() const { return widths.back(); }
    int layers() const { return static_cast<int>(widths.size()) - 1; }
    Eigen::Index param_count() const;
};

/// Parameters are stored layer by layer: W (row-major, out x in) then b.
struct Mlp {
    MlpSpec spec;
    ParamVector params;

    Mlp() = default;
    explicit Mlp(MlpSpec s) : spec(std::move(s)), params(ParamVector::Zero(spec.param_count())) {}

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void init_uniform(std::uint64_t seed);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weight(int l) const;
    Eigen::Map<const Eigen::VectorXd> bias(int l) const;
    Eigen::Index weight_offset(int l) const;
};

/// Numeric forward pass; x has one sample per column.
Eigen::MatrixXd mlp_forward(const Mlp &net, const Eigen::MatrixXd &x);

struct MlpBinding {
    std::vector<ad::Var> W;
    std::vector<ad::Var> b;

    std::vector<ad::Var> leaves() const;
};

MlpBinding bind(ad::Tape &tape, const Mlp &net);
ad::Var mlp_forward(const MlpBinding &net, const ad::Var &x);

struct Tangent {
    ad::Var value;
    ad::Var dot;
};

/// Forward pass together with the directional derivative along xdot.
Tangent mlp_forward_tangent(const MlpBinding &net, const ad::Var &x, const ad::Var &xdot);

/// Flattens per-leaf gradients (in MlpBinding::leaves order) into the
/// parameter layout.
ParamVector flatten_grad(const Mlp &net, const std::vector<Eigen::MatrixXd> &leaf_grads);

struct MlpVjp {
    Eigen::MatrixXd grad_x;
    ParamVector grad_params;
};

/// seed^T d mlp(x), with respect to inputs and parameters.
MlpVjp mlp_vjp(const Mlp &net, const Eigen::MatrixXd &x, const Eigen::MatrixXd &seed);

/// Row-major packing (l11, l21, l22, l31, l32, l33) of the lower factor.
inline constexpr int kCholeskyEntries = 6;

/// M^-1 = L L^T + eps I, as row-major 9-rows per column.
ad::Var cholesky_head(const ad::Var &raw, double eps);
Eigen::Matrix3d cholesky_head(const Eigen::VectorXd &raw, double eps);

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(ParamVector &params, const ParamVector &grad, AdamState &state, const AdamConfig &cfg);
void sgd_step(ParamVector &params, const ParamVector &grad, double lr);

struct PretrainResult {
    double mean_frobenius_error = 0.0;
    int iterations = 0;
};

/// Fits a Cholesky mass net so that its output is close to the target matrix
/// on inputs drawn by sampler(batch). Returns the mean Frobenius error on the
/// final batch.
PretrainResult pretrain_mass(Mlp &net, double eps, const Eigen::Matrix3d &target,
                             const std::function<Eigen::MatrixXd(int)> &sampler, int iterations, int batch,
                             const AdamConfig &cfg);

} // namespace se3ham
