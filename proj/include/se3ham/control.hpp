// Energy-shaping and damping-injection regulation, IDA-PBC tracking on
// SE(3), and a closed-loop simulator with zero-order-hold control.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

#include "se3ham/geometry.hpp"
#include "se3ham/hammodel.hpp"

namespace se3ham {

/// Diagonal gains. With mass_relative set, each diagonal d is read as
/// K = D^1/2 M D^1/2 against the model's mass at a reference state.
struct ControlGains {
    Vec3 Kp = Vec3::Zero();
    Vec3 Kv = Vec3::Zero();
    Vec3 KR = Vec3::Zero();
    Vec3 Kw = Vec3::Zero();
    bool mass_relative = false;
};

struct ResolvedGains {
    Mat3 Kp = Mat3::Zero();
    Mat3 Kv = Mat3::Zero();
    Mat3 KR = Mat3::Zero();
    Mat3 Kw = Mat3::Zero();

    /// blkdiag(Kv, Kw), or Kw alone on SO(3).
    Eigen::MatrixXd Kd(SystemKind kind) const;
};

ResolvedGains resolve_gains(const ControlGains &gains, const HamiltonianModel &model, const Eigen::VectorXd &q_ref);

/// (g^T g)^-1 g^T. Throws RankDeficient when the smallest singular value is
/// at most 1e-8.
Eigen::MatrixXd pinv_g(const Eigen::MatrixXd &g);

/// Inputs whose generalized force best matches the wrench in the velocity
/// metric: argmin_u |M^-1 (g u - wrench)|. Equal to g^+ wrench whenever the
/// wrench lies in the span of g or M^-1 is a multiple of the identity.
Eigen::VectorXd solve_inputs(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &wrench);

struct RegulationTarget {
    Vec3 p = Vec3::Zero();
    Mat3 R = Mat3::Identity();
};

/// u = solve_inputs([-R^T dHa/dp; sum r_i x dHa/dr_i] - Kd zeta) with
/// Ha = -V + 1/2 |p - p*|^2_Kp + 1/2 tr(KR (I - R*^T R)). The position term
/// is absent on SO(3).
Eigen::VectorXd esdi_control(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                             const RegulationTarget &target, const ResolvedGains &gains);

/// Hd = H + Ha, the closed-loop storage function of the regulator.
double esdi_energy(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                   const RegulationTarget &target, const ResolvedGains &gains);

/// |pdot(u) - pdot_desired| where the desired port-Hamiltonian form uses
/// J2 = p^x and dissipation Kd.
double esdi_matching_residual(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                              const RegulationTarget &target, const ResolvedGains &gains);

struct TrajectoryPoint {
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    Vec3 a = Vec3::Zero();
    double psi = 0.0;
    double psi_dot = 0.0;
};

struct DesiredTrajectory {
    std::function<TrajectoryPoint(double)> at;

    static DesiredTrajectory hover(const Vec3 &p, double psi = 0.0);
    /// Counter-clockwise circle in a horizontal plane, starting at center + [r, 0, 0].
    static DesiredTrajectory circle(const Vec3 &center, double radius, double period, double psi = 0.0);
};

/// Full pose-and-twist reference; omega and omega_dot are in the desired frame.
struct TrackingTarget {
    Vec3 p = Vec3::Zero();
    Vec3 p_dot = Vec3::Zero();
    Vec3 p_ddot = Vec3::Zero();
    Mat3 R = Mat3::Identity();
    Vec3 omega = Vec3::Zero();
    Vec3 omega_dot = Vec3::Zero();
};

/// e(q, q*) = [R^T Kp (p - p*); 1/2 (KR R*^T R - R^T R* KR^T)^vee]
Vector6<double> coordinate_error(const Eigen::VectorXd &q, const TrackingTarget &target, const ResolvedGains &gains);

/// q^xT dV/dq - p^x zeta - e - Kd (zeta - zeta*) + pdot*, the generalized
/// force the tracking law asks the inputs to produce.
Vector6<double> tracking_wrench(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                                const TrackingTarget &target, const ResolvedGains &gains);

/// u = solve_inputs(tracking_wrench)
Eigen::VectorXd idapbc_control(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                               const TrackingTarget &target, const ResolvedGains &gains);

/// zeta* = [R^T p_dot*; R^T R* omega*]
Vector6<double> desired_twist(const Eigen::VectorXd &q, const TrackingTarget &target);

struct MatchingResiduals {
    /// |qdot_e - J1 M^-1 (p - p*)|
    double cond1 = 0.0;
    /// |g u - (q^xT dH/dq - J1^T dHd/dq_e - p^x zeta - Kd M^-1 (p - p*) + pdot*)|
    double cond2 = 0.0;
};

MatchingResiduals tracking_matching_residuals(const HamiltonianModel &model, const Eigen::VectorXd &q,
                                              const Eigen::VectorXd &zeta, const TrackingTarget &target,
                                              const ResolvedGains &gains);

struct DesiredAttitude {
    Mat3 R = Mat3::Identity();
    Vec3 omega = Vec3::Zero();
    Vec3 omega_dot = Vec3::Zero();
};

/// Previous evaluation, used to difference R b_v and omega* in time.
struct AttitudeCache {
    bool valid = false;
    double t = 0.0;
    Vec3 thrust = Vec3::Zero();
    DesiredAttitude last;
};

/// Body z along R b_v with heading psi. Throws DegenerateThrust when
/// |R b_v| <= 1e-8 and GimbalDegenerate when the heading is parallel to it.
DesiredAttitude desired_rotation(const Mat3 &R, const Vec3 &b_v, double psi, double psi_dot, double t,
                                 AttitudeCache &cache);

/// What a controller reports at one tick.
struct ControlOutput {
    Eigen::VectorXd u;
    Vec3 p_star = Vec3::Zero();
    Mat3 R_star = Mat3::Identity();
    /// Desired twist in the current body frame.
    Eigen::VectorXd zeta_star;
    /// Closed-loop storage function, or NaN.
    double energy = 0.0;
};

using Controller = std::function<ControlOutput(double t, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta)>;

Controller make_esdi_controller(const HamiltonianModel &model, const RegulationTarget &target,
                                const ResolvedGains &gains);

/// Under-actuated tracking with thrust-vector attitude. The returned
/// controller keeps differencing state and is single-consumer.
Controller make_tracking_controller(const HamiltonianModel &model, const DesiredTrajectory &traj,
                                    const ResolvedGains &gains);

using PlantRhs = std::function<StateDerivative(const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                                               const Eigen::VectorXd &u)>;

struct ClosedLoopOptions {
    double horizon = 10.0;
    double dt = 1e-3;
    /// Controller ticks every rate_divisor plant steps with the input held in
    /// between. Zero evaluates the controller at every integrator stage.
    int rate_divisor = 10;
    /// Measure per-call controller time.
    bool timing = false;
};

struct TraceRow {
    double t = 0.0;
    Vec3 p = Vec3::Zero();
    Vec3 p_star = Vec3::Zero();
    double rot_err = 0.0;
    double v_err = 0.0;
    double w_err = 0.0;
    Eigen::VectorXd u;
    double ctrl_us = 0.0;
    double energy = 0.0;
};

struct ClosedLoopResult {
    std::vector<TraceRow> trace;
    FullState final_state;
    double mean_ctrl_us = 0.0;
    int controller_calls = 0;
};

ClosedLoopResult closed_loop(SystemKind kind, const PlantRhs &plant, const Controller &controller,
                             const FullState &x0, const ClosedLoopOptions &opt);

/// RMS of |p - p*| over trace rows with t >= t_from.
double rms_position_error(const ClosedLoopResult &res, double t_from);

} // namespace se3ham
