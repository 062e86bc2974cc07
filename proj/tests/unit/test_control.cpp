#include <gtest/gtest.h>

#include <random>

#include "se3ham/control.hpp"
#include "se3ham/envs.hpp"
#include "se3ham/errors.hpp"

using namespace se3ham;

namespace {

struct RandomState {
    Eigen::VectorXd q, zeta;
};

RandomState random_state(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    RandomState s;
    const Vec3 w(U(rng), U(rng), U(rng));
    s.q = Eigen::VectorXd(12);
    s.q << U(rng), U(rng), U(rng), matrix_to_rows<double>(exp_so3<double>(1.5 * w));
    s.zeta = Eigen::VectorXd(6);
    for (int i = 0; i < 6; ++i) s.zeta(i) = U(rng);
    return s;
}

TrackingTarget random_target(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    TrackingTarget t;
    t.p = Vec3(U(rng), U(rng), U(rng));
    t.p_dot = Vec3(U(rng), U(rng), U(rng));
    t.p_ddot = Vec3(U(rng), U(rng), U(rng));
    t.R = exp_so3<double>(Vec3(U(rng), U(rng), U(rng)));
    t.omega = Vec3(U(rng), U(rng), U(rng));
    t.omega_dot = Vec3(U(rng), U(rng), U(rng));
    return t;
}

ResolvedGains absolute_gains(double kp, double kv, double kr, double kw) {
    ResolvedGains g;
    g.Kp = kp * Mat3::Identity();
    g.Kv = kv * Mat3::Identity();
    g.KR = kr * Mat3::Identity();
    g.Kw = kw * Mat3::Identity();
    return g;
}

} // namespace

TEST(Gains, MassRelativeResolution) {
    const RigidBodyParams rp;
    const HamiltonianModel m = analytic_rigid_body_model(rp);
    ControlGains g;
    g.Kp = Vec3::Constant(2.0);
    g.KR = Vec3(1, 2, 3);
    g.mass_relative = true;
    Eigen::VectorXd q(12);
    q << 0, 0, 0, matrix_to_rows<double>(Mat3::Identity());
    const ResolvedGains r = resolve_gains(g, m, q);
    EXPECT_NEAR(r.Kp(0, 0), 2.0 * rp.mass, 1e-15);
    EXPECT_NEAR(r.KR(2, 2), 3.0 * rp.inertia(2), 1e-15);
    EXPECT_EQ(r.Kv, Mat3::Zero());
    EXPECT_EQ(r.Kd(SystemKind::SE3).rows(), 6);
    EXPECT_EQ(r.Kd(SystemKind::SO3).rows(), 3);
    g.Kv(1) = -1.0;
    EXPECT_THROW(resolve_gains(g, m, q), Error);
}

TEST(Pinv, LeftInverseAndRankCheck) {
    Eigen::MatrixXd g(6, 4);
    g.setRandom();
    EXPECT_LE((pinv_g(g) * g - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-12);
    g.col(3) = g.col(0);
    try {
        pinv_g(g);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
    }
    EXPECT_THROW(pinv_g(Eigen::MatrixXd::Ones(2, 3)), Error);
}

TEST(Regulation, EquilibriumAtTarget) {
    const RigidBodyParams rp;
    const HamiltonianModel m = analytic_rigid_body_model(rp);
    RegulationTarget target;
    target.p = Vec3(1, 2, 5);
    Eigen::VectorXd q(12);
    q << target.p, matrix_to_rows<double>(Mat3::Identity());
    const ResolvedGains gains = absolute_gains(0.5, 0.25, 0.5, 0.25e-3);
    const Eigen::VectorXd u = esdi_control(m, q, Eigen::VectorXd::Zero(6), target, gains);
    Eigen::VectorXd hover = Eigen::VectorXd::Zero(6);
    hover(2) = rp.mass * rp.gravity;
    EXPECT_LE((u - hover).norm(), 1e-14);
    EXPECT_NEAR(esdi_energy(m, q, Eigen::VectorXd::Zero(6), target, gains), 0.0, 1e-14);
}

TEST(Regulation, MatchingResidualVanishes) {
    std::mt19937_64 rng(1);
    const HamiltonianModel rb = analytic_rigid_body_model(RigidBodyParams{});
    const ResolvedGains gains = absolute_gains(0.5, 0.25, 0.5, 0.25e-3);
    for (int i = 0; i < 20; ++i) {
        const RandomState s = random_state(rng);
        RegulationTarget t;
        t.R = exp_so3<double>(Vec3(0.2, -0.1, 0.3));
        EXPECT_LE(esdi_matching_residual(rb, s.q, s.zeta, t, gains), 1e-10);
    }
    const HamiltonianModel pend = analytic_pendulum_model(PendulumParams{});
    RegulationTarget t;
    t.R = exp_so3<double>(Vec3(0, 0, M_PI));
    const ResolvedGains pg = absolute_gains(0, 0, 1.0, 0.4);
    for (double phi : {-2.0, 0.3, 1.7}) {
        const FullState x = pendulum_state(phi, 0.5);
        EXPECT_LE(esdi_matching_residual(pend, x.q, x.zeta, t, pg), 1e-12);
    }
}

TEST(Regulation, EnergyDecreasesAlongClosedLoop) {
    const PendulumParams pp;
    const HamiltonianModel m = analytic_pendulum_model(pp);
    RegulationTarget target;
    target.R = exp_so3<double>(Vec3(0, 0, M_PI));
    const ResolvedGains gains = absolute_gains(0, 0, 1.0, 0.4);
    ClosedLoopOptions opt;
    opt.horizon = 2.0;
    opt.rate_divisor = 0;
    const PlantRhs plant = [&](const Eigen::VectorXd &q, const Eigen::VectorXd &z, const Eigen::VectorXd &u) {
        return rhs(m, q, z, u);
    };
    const ClosedLoopResult r =
        closed_loop(SystemKind::SO3, plant, make_esdi_controller(m, target, gains), pendulum_state(0.5, 0.0), opt);
    ASSERT_EQ(r.trace.size(), 2001u);
    for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].energy - r.trace[i - 1].energy, 1e-9);
    EXPECT_LT(r.trace.back().energy, r.trace.front().energy);
}

TEST(Tracking, CoordinateErrorAndTwist) {
    const ResolvedGains gains = absolute_gains(2, 1, 3, 1);
    TrackingTarget t;
    t.p = Vec3(1, 0, 0);
    t.p_dot = Vec3(0, 1, 0);
    t.omega = Vec3(0, 0, 0.5);
    Eigen::VectorXd q(12);
    q << 0, 0, 0, matrix_to_rows<double>(exp_so3<double>(Vec3(0, 0, 0.2)));
    const Vector6<double> e = coordinate_error(q, t, gains);
    const Mat3 R = exp_so3<double>(Vec3(0, 0, 0.2));
    EXPECT_LE((Vec3(e.head<3>()) - R.transpose() * Vec3(-2, 0, 0)).norm(), 1e-15);
    EXPECT_LE((Vec3(e.tail<3>()) - Vec3(0, 0, 3 * std::sin(0.2))).norm(), 1e-14);
    const Vector6<double> zs = desired_twist(q, t);
    EXPECT_LE((Vec3(zs.head<3>()) - R.transpose() * t.p_dot).norm(), 1e-15);
    EXPECT_LE((Vec3(zs.tail<3>()) - Vec3(0, 0, 0.5)).norm(), 1e-15);
}

TEST(Tracking, MatchingResiduals) {
    std::mt19937_64 rng(2);
    const HamiltonianModel m = analytic_rigid_body_model(RigidBodyParams{});
    const ResolvedGains gains = absolute_gains(0.3, 0.2, 0.01, 0.002);
    for (int i = 0; i < 50; ++i) {
        const RandomState s = random_state(rng);
        const MatchingResiduals r = tracking_matching_residuals(m, s.q, s.zeta, random_target(rng), gains);
        EXPECT_LE(r.cond1, 1e-12);
        EXPECT_LE(r.cond2, 1e-8);
    }
}

TEST(Tracking, RequiresSe3) {
    const HamiltonianModel m = analytic_pendulum_model(PendulumParams{});
    EXPECT_THROW(make_tracking_controller(m, DesiredTrajectory::hover(Vec3::Zero()), ResolvedGains{}), Error);
}

TEST(Trajectory, CircleDerivatives) {
    const DesiredTrajectory c = DesiredTrajectory::circle(Vec3(0, 0, 1), 1.0, 8.0);
    const TrajectoryPoint a = c.at(0.0);
    EXPECT_LE((a.p - Vec3(1, 0, 1)).norm(), 1e-15);
    const double h = 1e-5;
    for (double t : {0.3, 2.0, 7.1}) {
        const TrajectoryPoint p = c.at(t);
        EXPECT_LE(((c.at(t + h).p - c.at(t - h).p) / (2 * h) - p.v).norm(), 1e-8);
        EXPECT_LE(((c.at(t + h).v - c.at(t - h).v) / (2 * h) - p.a).norm(), 1e-8);
    }
    EXPECT_THROW(DesiredTrajectory::circle(Vec3::Zero(), 1.0, 0.0), Error);
    EXPECT_EQ(DesiredTrajectory::hover(Vec3(1, 2, 3)).at(5.0).p, Vec3(1, 2, 3));
}

TEST(DesiredRotation, AlignsThrustAndHeading) {
    AttitudeCache cache;
    const Mat3 R = exp_so3<double>(Vec3(0.1, 0.2, 0.3));
    const Vec3 bv(0.1, -0.2, 1.5);
    const DesiredAttitude d = desired_rotation(R, bv, 0.4, 0.0, 0.0, cache);
    EXPECT_LE(orthogonality_error<double>(d.R), 1e-14);
    EXPECT_NEAR(d.R.determinant(), 1.0, 1e-14);
    EXPECT_LE((Vec3(d.R.col(2)) - (R * bv).normalized()).norm(), 1e-15);
    EXPECT_NEAR(d.R.col(0).dot(Vec3(-std::sin(0.4), std::cos(0.4), 0)), 0.0, 1e-15);
    EXPECT_EQ(d.omega, Vec3::Zero());
    EXPECT_TRUE(cache.valid);

    // A thrust that turns about x at a steady rate gives omega* along x.
    AttitudeCache c2;
    const double rate = 0.5, h = 1e-4;
    desired_rotation(Mat3::Identity(), Vec3(0, 0, 1), 0.0, 0.0, 0.0, c2);
    const DesiredAttitude d2 =
        desired_rotation(Mat3::Identity(), Vec3(0, -std::sin(rate * h), std::cos(rate * h)), 0.0, 0.0, h, c2);
    EXPECT_NEAR(d2.omega(0), rate, 1e-4);

    AttitudeCache c3;
    try {
        desired_rotation(Mat3::Identity(), Vec3::Zero(), 0.0, 0.0, 0.0, c3);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateThrust);
    }
    try {
        desired_rotation(Mat3::Identity(), Vec3(0, 1, 0), 0.0, 0.0, 0.0, c3);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), ErrorCode::GimbalDegenerate);
    }
}

TEST(ClosedLoop, ZeroOrderHoldTicks) {
    const HamiltonianModel m = analytic_rigid_body_model(RigidBodyParams{});
    int calls = 0;
    const Controller ctrl = [&](double, const Eigen::VectorXd &, const Eigen::VectorXd &z) {
        ++calls;
        ControlOutput o;
        o.u = Eigen::VectorXd::Zero(6);
        o.u(2) = 0.027 * 9.81;
        o.zeta_star = Eigen::VectorXd::Zero(z.size());
        return o;
    };
    const PlantRhs plant = [&](const Eigen::VectorXd &q, const Eigen::VectorXd &z, const Eigen::VectorXd &u) {
        return rhs(m, q, z, u);
    };
    FullState x0{Eigen::VectorXd(12), Eigen::VectorXd::Zero(6)};
    x0.q << 0, 0, 1, matrix_to_rows<double>(Mat3::Identity());
    ClosedLoopOptions opt;
    opt.horizon = 0.1;
    const ClosedLoopResult r = closed_loop(SystemKind::SE3, plant, ctrl, x0, opt);
    EXPECT_EQ(calls, 11);
    EXPECT_EQ(r.controller_calls, 11);
    EXPECT_EQ(r.trace.size(), 11u);
    EXPECT_EQ(r.mean_ctrl_us, 0.0);
    EXPECT_LE((r.final_state.q - x0.q).norm(), 1e-14);
    EXPECT_NEAR(rms_position_error(r, 0.0), 1.0, 1e-14);
    EXPECT_THROW(rms_position_error(r, 1.0), Error);
    opt.rate_divisor = -1;
    EXPECT_THROW(closed_loop(SystemKind::SE3, plant, ctrl, x0, opt), Error);
}

TEST(ClosedLoop, AnalyticHoverHolds) {
    const QuadrotorParams qp;
    const HamiltonianModel m = analytic_quadrotor_model(qp);
    ControlGains cg;
    cg.Kp = Vec3::Constant(5);
    cg.Kv = Vec3::Constant(2.5);
    cg.KR = Vec3::Constant(250);
    cg.Kw = Vec3::Constant(20);
    cg.mass_relative = true;
    FullState x0{Eigen::VectorXd(12), Eigen::VectorXd::Zero(6)};
    x0.q << 0.1, -0.1, 0.9, matrix_to_rows<double>(exp_so3<double>(Vec3(0.05, -0.05, 0.0)));
    const ResolvedGains gains = resolve_gains(cg, m, x0.q);
    const PlantRhs plant = [&](const Eigen::VectorXd &q, const Eigen::VectorXd &z, const Eigen::VectorXd &u) {
        return quadrotor_rhs_body(qp, q, z, u);
    };
    ClosedLoopOptions opt;
    opt.horizon = 6.0;
    const ClosedLoopResult r = closed_loop(
        SystemKind::SE3, plant, make_tracking_controller(m, DesiredTrajectory::hover(Vec3(0, 0, 1)), gains), x0, opt);
    EXPECT_LE((Vec3(r.final_state.q.head<3>()) - Vec3(0, 0, 1)).norm(), 1e-2);
}
