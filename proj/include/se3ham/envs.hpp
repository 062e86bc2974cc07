// Ground-truth simulators, their closed-form Hamiltonian models and dataset
// generation.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "se3ham/hammodel.hpp"

namespace se3ham {

/// phi_ddot = -a sin(phi) + b u
struct PendulumParams {
    double a = 15.0;
    double b = 3.0;
};

struct RigidBodyParams {
    double mass = 0.027;
    Eigen::Vector3d inertia{1.4e-5, 1.4e-5, 2.17e-5};
    double gravity = 9.81;
};

struct QuadrotorParams {
    double mass = 0.027;
    Eigen::Vector3d inertia{1.4e-5, 1.4e-5, 2.17e-5};
    double gravity = 9.81;
    double arm = 0.04;
    double thrust_coeff = 3.16e-10;
    double torque_coeff = 7.94e-12;
};

enum class SystemId { Pendulum, RigidBody, Quadrotor };

SystemId parse_system(const std::string &name);
std::string system_name(SystemId id);
SystemKind system_kind(SystemId id);
int control_dim(SystemId id);

/// [phi_dot, phi_ddot]
Eigen::Vector2d pendulum_rhs(const PendulumParams &p, const Eigen::Vector2d &x, double u);
/// SO(3) state for rotation by phi about z: q = rows of Rz(phi), zeta = [0, 0, phi_dot].
FullState pendulum_state(double phi, double phi_dot);
double pendulum_angle(const Eigen::VectorXd &q);

/// Newton-Euler rigid body in body-frame velocities; u = [force; torque] in
/// the body frame.
StateDerivative rigidbody_rhs(const RigidBodyParams &p, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                              const Eigen::VectorXd &u);

/// World-frame quadrotor state x = [p; r1; r2; r3; p_dot; omega] and
/// u = [f; tau] with thrust along the body z axis.
Eigen::VectorXd quadrotor_rhs(const QuadrotorParams &p, const Eigen::VectorXd &x, const Eigen::VectorXd &u);
/// Body-frame view of the same dynamics on [q; v; omega].
StateDerivative quadrotor_rhs_body(const QuadrotorParams &p, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                                   const Eigen::VectorXd &u);
Eigen::VectorXd quadrotor_world_to_body(const Eigen::VectorXd &x);
Eigen::VectorXd quadrotor_body_to_world(const Eigen::VectorXd &x);

/// Maps squared rotor speeds to [f; tau].
Eigen::Matrix4d rotor_mixer(const QuadrotorParams &p);

HamiltonianModel analytic_pendulum_model(const PendulumParams &p);
HamiltonianModel analytic_rigid_body_model(const RigidBodyParams &p);
HamiltonianModel analytic_quadrotor_model(const QuadrotorParams &p);

struct Record {
    std::vector<double> t;
    std::vector<Eigen::VectorXd> q;
    std::vector<Eigen::VectorXd> zeta;
    Eigen::VectorXd u;
};

struct Dataset {
    SystemId system = SystemId::Pendulum;
    std::vector<Record> records;
};

/// Sampling bands; a value x means uniform in [-x, x] unless noted.
struct SamplerConfig {
    /// Positions are uniform in the cube center +- position.
    double position = 1.0;
    Eigen::Vector3d position_center = Eigen::Vector3d::Zero();
    /// Initial rotation angle bound (radians, axis uniform on the sphere).
    double rotation_angle = 3.14159265358979;
    double velocity = 1.0;
    double angular_velocity = 2.0;
    /// Pendulum angular rate bound.
    double phi_dot = 3.0;
    /// Pendulum torque bound.
    double pendulum_u = 2.0;
    /// Rigid-body force bound as a multiple of m g.
    double force_mg = 2.0;
    double torque = 1e-4;
    /// Quadrotor thrust as a multiple of m g, uniform in [lo, hi].
    double thrust_lo = 0.8;
    double thrust_hi = 1.2;
    double quad_torque = 5e-4;
};

struct DatasetConfig {
    SystemId system = SystemId::Pendulum;
    int records = 512;
    int intervals = 5;
    double dt = 0.05;
    /// RK4 steps of the simulator per sample interval.
    int sim_substeps = 50;
    std::uint64_t seed = 0;
    SamplerConfig sampler;
    PendulumParams pendulum;
    RigidBodyParams rigid_body;
    QuadrotorParams quadrotor;
};

Dataset generate_dataset(const DatasetConfig &cfg, int threads = 1);

/// Ground-truth rhs in the model's [q; zeta] convention.
StateDerivative ground_truth_rhs(const DatasetConfig &cfg, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                                 const Eigen::VectorXd &u);
HamiltonianModel ground_truth_model(const DatasetConfig &cfg);

/// Random state and control from the same bands the dataset uses.
struct Sample {
    FullState x;
    Eigen::VectorXd u;
};
Sample sample_state(const DatasetConfig &cfg, std::uint64_t stream);

/// Deterministic per-stream seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace se3ham
