// Port-Hamiltonian dynamics on SE(3) and SO(3) with mass, potential and
// input fields that are either closed-form or learned networks.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

#include "se3ham/ad/tape.hpp"
#include "se3ham/geometry.hpp"
#include "se3ham/nn.hpp"

namespace se3ham {

enum class SystemKind { SE3, SO3 };

inline int q_dim(SystemKind k) { return k == SystemKind::SE3 ? 12 : 9; }
inline int zeta_dim(SystemKind k) { return k == SystemKind::SE3 ? 6 : 3; }

/// A map from generalized coordinates to a fixed-size output.
struct Field {
    enum class Kind { Constant, Affine, Learned };

    Kind kind = Kind::Constant;
    /// Constant value, or the offset of an affine field.
    Eigen::VectorXd c;
    /// Affine slope (outputs x q_dim).
    Eigen::MatrixXd A;
    Mlp net;
    /// Rows of q fed to the network.
    std::vector<int> input_rows;
    /// Network output goes through the Cholesky head.
    bool cholesky = false;
    /// Optional fixed per-output multiplier of a learned field.
    Eigen::VectorXd output_scale;

    static Field constant(Eigen::VectorXd value);
    static Field affine(Eigen::MatrixXd slope, Eigen::VectorXd offset);
    static Field learned(Mlp net, std::vector<int> input_rows, bool cholesky);

    bool is_learned() const { return kind == Kind::Learned; }
};

/// Constant 3x3 mass-inverse block stored row-major.
Field constant_mass_inverse(const Eigen::Matrix3d &Minv);

struct HamiltonianModel {
    SystemKind kind = SystemKind::SE3;
    int control_dim = 6;
    double epsilon = 0.01;
    /// Translational block; unused on SO(3).
    Field M1_inv;
    Field M2_inv;
    Field V;
    /// Input matrix, zeta_dim x control_dim stored row-major.
    Field g;

    int qdim() const { return q_dim(kind); }
    int zdim() const { return zeta_dim(kind); }

    std::vector<const Field *> learned_fields() const;
    std::vector<Field *> learned_fields();
    Eigen::Index param_count() const;
    ParamVector params() const;
    void set_params(const ParamVector &p);
    void validate() const;
};

struct NetWidths {
    std::vector<int> mass{64, 64, 64};
    std::vector<int> potential{64, 64};
    std::vector<int> input{64, 64};
};

/// Divides control channel j of a learned input matrix by scale(j), so the
/// network sees controls of order one.
void set_control_scale(HamiltonianModel &model, const Eigen::VectorXd &scale);

/// Four (SE(3)) or three (SO(3)) fresh networks with seeded uniform init.
HamiltonianModel make_learned_model(SystemKind kind, int control_dim, const NetWidths &widths, std::uint64_t seed,
                                    double epsilon = 0.01);

struct FullState {
    Eigen::VectorXd q;
    Eigen::VectorXd zeta;

    Eigen::VectorXd flat() const;
    static FullState from_flat(const Eigen::VectorXd &x, SystemKind kind);
};

struct RhsVars {
    ad::Var qdot;
    ad::Var zdot;
};

/// Model parameters placed as leaves on a tape. Inputs are batched with one
/// sample per column.
class BoundModel {
  public:
    BoundModel(const HamiltonianModel &model, ad::Tape &tape);

    const HamiltonianModel &model() const { return *model_; }
    ad::Tape &tape() const { return *tape_; }

    ad::Var mass_inverse(int block, const ad::Var &q) const;
    Tangent mass_inverse_tangent(int block, const ad::Var &q, const ad::Var &qdot) const;
    ad::Var potential(const ad::Var &q) const;
    ad::Var input_matrix(const ad::Var &q) const;

    /// dH/dq with the momentum held fixed.
    ad::Var dH_dq(const ad::Var &q, const ad::Var &p) const;
    RhsVars rhs(const ad::Var &q, const ad::Var &zeta, const ad::Var &u) const;

    std::vector<ad::Var> param_leaves() const;
    ParamVector flatten_grad(const std::vector<Eigen::MatrixXd> &grads) const;

  private:
    struct Bound {
        const Field *field = nullptr;
        MlpBinding net;
        ad::Var c;
        ad::Var A;
        ad::Var scale;
        std::shared_ptr<const ad::Index> rows;
    };
    Bound bind_field(const Field &f);
    ad::Var eval(const Bound &b, const ad::Var &q) const;
    Tangent eval_mass_tangent(const Bound &b, const ad::Var &q, const ad::Var &qdot) const;
    const Bound &mass_block(int block) const;

    const HamiltonianModel *model_;
    ad::Tape *tape_;
    Bound m1_, m2_, v_, g_;
};

/// Throws SingularMass when a column's 3x3 block has condition number above
/// 1e8 or is not positive definite.
void check_mass_condition(const Eigen::MatrixXd &Minv9);

// Single-state numeric evaluation.
struct MassInverse {
    Eigen::Matrix3d M1_inv = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d M2_inv = Eigen::Matrix3d::Identity();
};

MassInverse mass_inverse(const HamiltonianModel &model, const Eigen::VectorXd &q);
double potential(const HamiltonianModel &model, const Eigen::VectorXd &q);
Eigen::MatrixXd input_matrix(const HamiltonianModel &model, const Eigen::VectorXd &q);
Eigen::VectorXd dV_dq(const HamiltonianModel &model, const Eigen::VectorXd &q);
/// Momentum p = M(q) zeta, solved per block.
Eigen::VectorXd momentum(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta);
double hamiltonian(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &p);
Eigen::VectorXd dH_dp(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &p);
Eigen::VectorXd dH_dq(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &p);
MassInverse time_deriv_mass_inverse(const HamiltonianModel &model, const Eigen::VectorXd &q,
                                    const Eigen::VectorXd &qdot);

struct StateDerivative {
    Eigen::VectorXd qdot;
    Eigen::VectorXd zdot;
};

StateDerivative rhs_se3(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                        const Eigen::VectorXd &u);
StateDerivative rhs_so3(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                        const Eigen::VectorXd &u);
/// Dispatches on model.kind.
StateDerivative rhs(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                    const Eigen::VectorXd &u);

/// Batched numeric rhs, one sample per column.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> rhs_batch(const HamiltonianModel &model, const Eigen::MatrixXd &q,
                                                      const Eigen::MatrixXd &zeta, const Eigen::MatrixXd &u);

} // namespace se3ham
