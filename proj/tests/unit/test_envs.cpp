#include <gtest/gtest.h>

#include "se3ham/envs.hpp"
#include "se3ham/errors.hpp"
#include "se3ham/odeint.hpp"

using namespace se3ham;

namespace {

DatasetConfig small_config(SystemId sys, int records = 6) {
    DatasetConfig c;
    c.system = sys;
    c.records = records;
    c.intervals = 3;
    c.seed = 42;
    return c;
}

} // namespace

TEST(Systems, NamesAndDimensions) {
    EXPECT_EQ(parse_system("pendulum"), SystemId::Pendulum);
    EXPECT_EQ(parse_system("rigidbody"), SystemId::RigidBody);
    EXPECT_EQ(parse_system("rigid_body"), SystemId::RigidBody);
    EXPECT_EQ(parse_system("quadrotor"), SystemId::Quadrotor);
    EXPECT_THROW(parse_system("cartpole"), Error);
    EXPECT_EQ(system_name(SystemId::RigidBody), "rigidbody");
    EXPECT_EQ(control_dim(SystemId::Pendulum), 1);
    EXPECT_EQ(control_dim(SystemId::RigidBody), 6);
    EXPECT_EQ(control_dim(SystemId::Quadrotor), 4);
    EXPECT_EQ(system_kind(SystemId::Pendulum), SystemKind::SO3);
}

TEST(Pendulum, ScalarDynamics) {
    const PendulumParams p;
    const Eigen::Vector2d d = pendulum_rhs(p, Eigen::Vector2d(M_PI / 2, 0.3), 1.0);
    EXPECT_DOUBLE_EQ(d(0), 0.3);
    EXPECT_NEAR(d(1), -15.0 + 3.0, 1e-12);
    const FullState s = pendulum_state(0.5, 2.0);
    EXPECT_EQ(s.zeta, Eigen::Vector3d(0, 0, 2.0));
    EXPECT_LE((rows_to_matrix<double>(s.q) - exp_so3<double>(Vec3(0, 0, 0.5))).norm(), 1e-15);
}

TEST(RigidBody, FreeFallAndGyroscopic) {
    const RigidBodyParams p;
    Eigen::VectorXd q(12), z = Eigen::VectorXd::Zero(6);
    q << 0, 0, 0, matrix_to_rows<double>(Mat3::Identity());
    const StateDerivative d = rigidbody_rhs(p, q, z, Eigen::VectorXd::Zero(6));
    EXPECT_NEAR(d.zdot(2), -9.81, 1e-12);
    EXPECT_EQ(d.qdot, Eigen::VectorXd::Zero(12));
    // Hover force cancels gravity.
    Eigen::VectorXd u = Eigen::VectorXd::Zero(6);
    u(2) = p.mass * p.gravity;
    EXPECT_LE(rigidbody_rhs(p, q, z, u).zdot.norm(), 1e-14);
    // Spin about a principal axis is steady.
    z(5) = 4.0;
    EXPECT_LE(rigidbody_rhs(p, q, z, u).zdot.norm(), 1e-12);
}

TEST(Quadrotor, MixerAndFrames) {
    const QuadrotorParams p;
    const Eigen::Matrix4d M = rotor_mixer(p);
    const Eigen::Vector4d w2 = Eigen::Vector4d::Constant(p.mass * p.gravity / (4 * p.thrust_coeff));
    const Eigen::Vector4d u = M * w2;
    EXPECT_NEAR(u(0), p.mass * p.gravity, 1e-15);
    EXPECT_NEAR(u.tail<3>().norm(), 0.0, 1e-18);
    EXPECT_GT(std::abs(M.determinant()), 0.0);

    Eigen::VectorXd x(18);
    x << 1, 2, 3, matrix_to_rows<double>(exp_so3<double>(Vec3(0.2, -0.1, 0.4))), 0.5, -0.2, 0.1, 1, 2, 3;
    EXPECT_LE((quadrotor_body_to_world(quadrotor_world_to_body(x)) - x).norm(), 1e-14);

    Eigen::VectorXd hover = Eigen::VectorXd::Zero(18);
    hover.segment<9>(3) = matrix_to_rows<double>(Mat3::Identity());
    EXPECT_LE(quadrotor_rhs(p, hover, u).norm(), 1e-13);
}

TEST(Quadrotor, BodyViewMatchesWorld) {
    const QuadrotorParams p;
    Eigen::VectorXd xw(18);
    xw << 0.1, 0.2, 0.3, matrix_to_rows<double>(exp_so3<double>(Vec3(0.3, 0.2, -0.5))), 0.4, -0.3, 0.2, 0.5, -1, 2;
    Eigen::Vector4d u(0.3, 1e-4, -1e-4, 2e-5);
    const Eigen::VectorXd dw = quadrotor_rhs(p, xw, u);
    // Integrate both a short step and compare.
    const double h = 1e-7;
    const Eigen::VectorXd xb = quadrotor_world_to_body(xw);
    const StateDerivative db = quadrotor_rhs_body(p, xb.head(12), xb.tail(6), u);
    Eigen::VectorXd xb2(18);
    xb2 << xb.head(12) + h * db.qdot, xb.tail(6) + h * db.zdot;
    const Eigen::VectorXd fd = (quadrotor_body_to_world(xb2) - xw) / h;
    EXPECT_LE((fd - dw).norm(), 1e-4 * (1 + dw.norm()));
}

TEST(Dataset, ShapesAndDeterminism) {
    for (SystemId sys : {SystemId::Pendulum, SystemId::RigidBody, SystemId::Quadrotor}) {
        const DatasetConfig c = small_config(sys);
        const Dataset a = generate_dataset(c), b = generate_dataset(c, 3);
        ASSERT_EQ(a.records.size(), 6u);
        const HamiltonianModel m = ground_truth_model(c);
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            const Record &r = a.records[i];
            ASSERT_EQ(r.t.size(), 4u);
            EXPECT_NEAR(r.t.back(), 0.15, 1e-15);
            EXPECT_EQ(r.q.front().size(), m.qdim());
            EXPECT_EQ(r.zeta.front().size(), m.zdim());
            EXPECT_EQ(r.u.size(), control_dim(sys));
            for (std::size_t n = 0; n < r.q.size(); ++n) {
                EXPECT_EQ(r.q[n], b.records[i].q[n]);
                EXPECT_EQ(r.zeta[n], b.records[i].zeta[n]);
                EXPECT_LE(orthogonality_error<double>(rows_to_matrix<double>(r.q[n].tail(9))), 1e-9);
            }
        }
        DatasetConfig other = c;
        other.seed = 43;
        EXPECT_NE(generate_dataset(other).records[0].q[0], a.records[0].q[0]);
    }
}

TEST(Dataset, TrajectoriesFollowAnalyticModel) {
    for (SystemId sys : {SystemId::Pendulum, SystemId::RigidBody, SystemId::Quadrotor}) {
        const DatasetConfig c = small_config(sys, 3);
        const Dataset ds = generate_dataset(c);
        const HamiltonianModel m = ground_truth_model(c);
        for (const Record &r : ds.records) {
            FullState x0{r.q[0], r.zeta[0]};
            RolloutOptions opt;
            opt.substeps = 50;
            const RolloutResult res = rollout(model_field(m), x0.flat(), r.u, r.t, opt);
            const FullState xe = FullState::from_flat(res.states.back(), m.kind);
            EXPECT_LE((xe.q - r.q.back()).norm(), 1e-7);
            EXPECT_LE((xe.zeta - r.zeta.back()).norm(), 1e-6 * (1 + r.zeta.back().norm()));
        }
    }
}

TEST(Dataset, SamplerBands) {
    DatasetConfig c = small_config(SystemId::Quadrotor);
    const QuadrotorParams &qp = c.quadrotor;
    for (int s = 0; s < 200; ++s) {
        const Sample smp = sample_state(c, static_cast<std::uint64_t>(s));
        EXPECT_GE(smp.u(0), 0.8 * qp.mass * qp.gravity - 1e-15);
        EXPECT_LE(smp.u(0), 1.2 * qp.mass * qp.gravity + 1e-15);
        EXPECT_LE(smp.u.tail(3).cwiseAbs().maxCoeff(), 5e-4);
        EXPECT_LE(smp.x.q.head(3).cwiseAbs().maxCoeff(), 1.0);
    }
    EXPECT_NE(stream_seed(1, 2), stream_seed(1, 3));
    EXPECT_EQ(stream_seed(1, 2), stream_seed(1, 2));
    c.records = 0;
    EXPECT_THROW(generate_dataset(c), Error);
}

TEST(GroundTruth, RhsMatchesModel) {
    for (SystemId sys : {SystemId::Pendulum, SystemId::RigidBody, SystemId::Quadrotor}) {
        const DatasetConfig c = small_config(sys);
        const HamiltonianModel m = ground_truth_model(c);
        for (int s = 0; s < 10; ++s) {
            const Sample smp = sample_state(c, static_cast<std::uint64_t>(s));
            const StateDerivative a = ground_truth_rhs(c, smp.x.q, smp.x.zeta, smp.u);
            const StateDerivative b = rhs(m, smp.x.q, smp.x.zeta, smp.u);
            EXPECT_LE((a.zdot - b.zdot).norm(), 1e-9 * (1 + a.zdot.norm()));
        }
    }
}
