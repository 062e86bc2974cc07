#include "se3ham/envs.hpp"

#include <cmath>
#include <random>
#include <thread>

#include "se3ham/errors.hpp"
#include "se3ham/odeint.hpp"

namespace se3ham {

SystemId parse_system(const std::string &name) {
    if (name == "pendulum") return SystemId::Pendulum;
    if (name == "rigidbody" || name == "rigid_body") return SystemId::RigidBody;
    if (name == "quadrotor") return SystemId::Quadrotor;
    throw Error(ErrorCode::Config, "unknown system '" + name + "'");
}

std::string system_name(SystemId id) {
    switch (id) {
    case SystemId::Pendulum: return "pendulum";
    case SystemId::RigidBody: return "rigidbody";
    case SystemId::Quadrotor: return "quadrotor";
    }
    return "";
}

SystemKind system_kind(SystemId id) { return id == SystemId::Pendulum ? SystemKind::SO3 : SystemKind::SE3; }

int control_dim(SystemId id) {
    switch (id) {
    case SystemId::Pendulum: return 1;
    case SystemId::RigidBody: return 6;
    case SystemId::Quadrotor: return 4;
    }
    return 0;
}

Eigen::Vector2d pendulum_rhs(const PendulumParams &p, const Eigen::Vector2d &x, double u) {
    return {x(1), -p.a * std::sin(x(0)) + p.b * u};
}

FullState pendulum_state(double phi, double phi_dot) {
    FullState s;
    s.q = matrix_to_rows<double>(exp_so3<double>(Vec3(0, 0, phi)));
    s.zeta = Vec3(0, 0, phi_dot);
    return s;
}

double pendulum_angle(const Eigen::VectorXd &q) { return std::atan2(q(3), q(0)); }

StateDerivative rigidbody_rhs(const RigidBodyParams &p, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                              const Eigen::VectorXd &u) {
    if (q.size() != 12 || zeta.size() != 6 || u.size() != 6)
        throw Error(ErrorCode::DimMismatch, "rigid body state sizes");
    const Mat3 R = rows_to_matrix<double>(q.segment<9>(3));
    const Vec3 v = zeta.head<3>(), w = zeta.tail<3>();
    const Mat3 J = p.inertia.asDiagonal();
    StateDerivative d;
    d.qdot.resize(12);
    d.qdot.head<3>() = R * v;
    d.qdot.segment<9>(3) = matrix_to_rows<double>(R * hat3(w));
    d.zdot.resize(6);
    d.zdot.head<3>() = v.cross(w) - p.gravity * R.transpose() * Vec3::UnitZ() + u.head<3>() / p.mass;
    d.zdot.tail<3>() = J.inverse() * ((J * w).cross(w) + u.tail<3>());
    return d;
}

Eigen::VectorXd quadrotor_rhs(const QuadrotorParams &p, const Eigen::VectorXd &x, const Eigen::VectorXd &u) {
    if (x.size() != 18 || u.size() != 4) throw Error(ErrorCode::DimMismatch, "quadrotor state sizes");
    const Mat3 R = rows_to_matrix<double>(x.segment<9>(3));
    const Vec3 rho = x.segment<3>(12), w = x.segment<3>(15);
    const Mat3 J = p.inertia.asDiagonal();
    Eigen::VectorXd d(18);
    d.head<3>() = rho;
    d.segment<9>(3) = matrix_to_rows<double>(R * hat3(w));
    d.segment<3>(12) = -p.gravity * Vec3::UnitZ() + R * Vec3::UnitZ() * (u(0) / p.mass);
    d.segment<3>(15) = J.inverse() * (-w.cross(J * w) + u.tail<3>());
    return d;
}

Eigen::VectorXd quadrotor_world_to_body(const Eigen::VectorXd &x) {
    const Mat3 R = rows_to_matrix<double>(x.segment<9>(3));
    Eigen::VectorXd b = x;
    b.segment<3>(12) = R.transpose() * x.segment<3>(12);
    return b;
}

Eigen::VectorXd quadrotor_body_to_world(const Eigen::VectorXd &x) {
    const Mat3 R = rows_to_matrix<double>(x.segment<9>(3));
    Eigen::VectorXd w = x;
    w.segment<3>(12) = R * x.segment<3>(12);
    return w;
}

StateDerivative quadrotor_rhs_body(const QuadrotorParams &p, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                                   const Eigen::VectorXd &u) {
    Eigen::VectorXd xb(18);
    xb << q, zeta;
    const Eigen::VectorXd dw = quadrotor_rhs(p, quadrotor_body_to_world(xb), u);
    const Mat3 R = rows_to_matrix<double>(q.segment<9>(3));
    const Vec3 v = zeta.head<3>(), w = zeta.tail<3>();
    StateDerivative d;
    d.qdot.resize(12);
    d.qdot.head<3>() = R * v;
    d.qdot.segment<9>(3) = dw.segment<9>(3);
    d.zdot.resize(6);
    d.zdot.head<3>() = R.transpose() * dw.segment<3>(12) - w.cross(v);
    d.zdot.tail<3>() = dw.segment<3>(15);
    return d;
}

Eigen::Matrix4d rotor_mixer(const QuadrotorParams &p) {
    const double cT = p.thrust_coeff, cQ = p.torque_coeff, d = p.arm;
    Eigen::Matrix4d M;
    M << cT, cT, cT, cT,
         0, d * cT, 0, -d * cT,
         -d * cT, 0, d * cT, 0,
         -cQ, cQ, -cQ, cQ;
    return M;
}

HamiltonianModel analytic_pendulum_model(const PendulumParams &p) {
    HamiltonianModel m;
    m.kind = SystemKind::SO3;
    m.control_dim = 1;
    m.M1_inv = constant_mass_inverse(Mat3::Identity());
    m.M2_inv = constant_mass_inverse(p.b * Mat3::Identity());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 9);
    A(0, 0) = -p.a / p.b;
    m.V = Field::affine(A, Eigen::VectorXd::Constant(1, p.a / p.b));
    m.g = Field::constant(Vec3(0, 0, 1));
    m.validate();
    return m;
}

HamiltonianModel analytic_rigid_body_model(const RigidBodyParams &p) {
    HamiltonianModel m;
    m.kind = SystemKind::SE3;
    m.control_dim = 6;
    m.M1_inv = constant_mass_inverse(Mat3::Identity() / p.mass);
    m.M2_inv = constant_mass_inverse(p.inertia.cwiseInverse().asDiagonal());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 12);
    A(0, 2) = p.mass * p.gravity;
    m.V = Field::affine(A, Eigen::VectorXd::Zero(1));
    Eigen::MatrixXd I6 = Eigen::MatrixXd::Identity(6, 6);
    m.g = Field::constant(Eigen::Map<Eigen::VectorXd>(I6.data(), 36));
    m.validate();
    return m;
}

HamiltonianModel analytic_quadrotor_model(const QuadrotorParams &p) {
    HamiltonianModel m;
    m.kind = SystemKind::SE3;
    m.control_dim = 4;
    m.M1_inv = constant_mass_inverse(Mat3::Identity() / p.mass);
    m.M2_inv = constant_mass_inverse(p.inertia.cwiseInverse().asDiagonal());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 12);
    A(0, 2) = p.mass * p.gravity;
    m.V = Field::affine(A, Eigen::VectorXd::Zero(1));
    Eigen::Matrix<double, 6, 4, Eigen::RowMajor> G = Eigen::Matrix<double, 6, 4, Eigen::RowMajor>::Zero();
    G(2, 0) = 1.0;
    G(3, 1) = 1.0;
    G(4, 2) = 1.0;
    G(5, 3) = 1.0;
    m.g = Field::constant(Eigen::Map<Eigen::VectorXd>(G.data(), 24));
    m.validate();
    return m;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t s) : gen(s) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
    double sym(double b) { return uniform(-b, b); }
    Vec3 sym3(double b) { return {sym(b), sym(b), sym(b)}; }
    Mat3 rotation(double max_angle) {
        std::normal_distribution<double> N(0.0, 1.0);
        Vec3 axis(N(gen), N(gen), N(gen));
        axis.normalize();
        return exp_so3<double>(axis * uniform(0.0, max_angle));
    }
};

Sample draw(const DatasetConfig &cfg, Rng &rng) {
    const SamplerConfig &s = cfg.sampler;
    Sample out;
    switch (cfg.system) {
    case SystemId::Pendulum: {
        const double phi = rng.sym(M_PI), phid = rng.sym(s.phi_dot);
        out.x = pendulum_state(phi, phid);
        out.u = Eigen::VectorXd::Constant(1, rng.sym(s.pendulum_u));
        break;
    }
    case SystemId::RigidBody: {
        const RigidBodyParams &p = cfg.rigid_body;
        out.x.q.resize(12);
        out.x.q << s.position_center + rng.sym3(s.position), matrix_to_rows<double>(rng.rotation(s.rotation_angle));
        out.x.zeta.resize(6);
        out.x.zeta << rng.sym3(s.velocity), rng.sym3(s.angular_velocity);
        out.u.resize(6);
        out.u << rng.sym3(s.force_mg * p.mass * p.gravity), rng.sym3(s.torque);
        break;
    }
    case SystemId::Quadrotor: {
        const QuadrotorParams &p = cfg.quadrotor;
        out.x.q.resize(12);
        out.x.q << s.position_center + rng.sym3(s.position), matrix_to_rows<double>(rng.rotation(s.rotation_angle));
        out.x.zeta.resize(6);
        out.x.zeta << rng.sym3(s.velocity), rng.sym3(s.angular_velocity);
        out.u.resize(4);
        out.u << rng.uniform(s.thrust_lo, s.thrust_hi) * p.mass * p.gravity, rng.sym3(s.quad_torque);
        break;
    }
    }
    return out;
}

Record simulate(const DatasetConfig &cfg, const Sample &s) {
    Record rec;
    rec.u = s.u;
    std::vector<double> times;
    for (int n = 0; n <= cfg.intervals; ++n) times.push_back(n * cfg.dt);
    rec.t = times;
    RolloutOptions opt;
    opt.substeps = cfg.sim_substeps;
    switch (cfg.system) {
    case SystemId::Pendulum: {
        const double phi0 = pendulum_angle(s.x.q);
        VectorField f = [&](double, const Eigen::VectorXd &x, const Eigen::VectorXd &u) {
            return Eigen::VectorXd(pendulum_rhs(cfg.pendulum, x.head<2>(), u(0)));
        };
        RolloutResult r = rollout(f, Eigen::Vector2d(phi0, s.x.zeta(2)), s.u, times, opt);
        for (const auto &x : r.states) {
            FullState ps = pendulum_state(x(0), x(1));
            rec.q.push_back(ps.q);
            rec.zeta.push_back(ps.zeta);
        }
        break;
    }
    case SystemId::RigidBody: {
        VectorField f = [&](double, const Eigen::VectorXd &x, const Eigen::VectorXd &u) {
            StateDerivative d = rigidbody_rhs(cfg.rigid_body, x.head(12), x.tail(6), u);
            Eigen::VectorXd out(18);
            out << d.qdot, d.zdot;
            return out;
        };
        RolloutResult r = rollout(f, s.x.flat(), s.u, times, opt);
        for (const auto &x : r.states) {
            rec.q.push_back(x.head(12));
            rec.zeta.push_back(x.tail(6));
        }
        break;
    }
    case SystemId::Quadrotor: {
        VectorField f = [&](double, const Eigen::VectorXd &x, const Eigen::VectorXd &u) {
            return quadrotor_rhs(cfg.quadrotor, x, u);
        };
        RolloutResult r = rollout(f, quadrotor_body_to_world(s.x.flat()), s.u, times, opt);
        for (const auto &x : r.states) {
            const Eigen::VectorXd b = quadrotor_world_to_body(x);
            rec.q.push_back(b.head(12));
            rec.zeta.push_back(b.tail(6));
        }
        break;
    }
    }
    return rec;
}

} // namespace

Sample sample_state(const DatasetConfig &cfg, std::uint64_t stream) {
    Rng rng(stream_seed(cfg.seed, stream));
    return draw(cfg, rng);
}

Dataset generate_dataset(const DatasetConfig &cfg, int threads) {
    if (cfg.records < 1 || cfg.intervals < 1 || cfg.dt <= 0.0 || cfg.sim_substeps < 1)
        throw Error(ErrorCode::Config, "dataset sizes must be positive");
    Dataset ds;
    ds.system = cfg.system;
    ds.records.resize(static_cast<std::size_t>(cfg.records));
    auto work = [&](int begin, int stride) {
        for (int i = begin; i < cfg.records; i += stride)
            ds.records[static_cast<std::size_t>(i)] = simulate(cfg, sample_state(cfg, static_cast<std::uint64_t>(i)));
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
        for (auto &t : pool) t.join();
    }
    return ds;
}

StateDerivative ground_truth_rhs(const DatasetConfig &cfg, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                                 const Eigen::VectorXd &u) {
    switch (cfg.system) {
    case SystemId::Pendulum: {
        const Vec3 w = zeta;
        StateDerivative d;
        d.qdot.resize(9);
        for (int i = 0; i < 3; ++i) d.qdot.segment<3>(3 * i) = Vec3(q.segment<3>(3 * i)).cross(w);
        const Vec3 r1 = q.head<3>();
        d.zdot = -cfg.pendulum.a * r1.cross(Vec3::UnitX()) + cfg.pendulum.b * u(0) * Vec3::UnitZ();
        return d;
    }
    case SystemId::RigidBody:
        return rigidbody_rhs(cfg.rigid_body, q, zeta, u);
    case SystemId::Quadrotor:
        return quadrotor_rhs_body(cfg.quadrotor, q, zeta, u);
    }
    return {};
}

HamiltonianModel ground_truth_model(const DatasetConfig &cfg) {
    switch (cfg.system) {
    case SystemId::Pendulum: return analytic_pendulum_model(cfg.pendulum);
    case SystemId::RigidBody: return analytic_rigid_body_model(cfg.rigid_body);
    case SystemId::Quadrotor: return analytic_quadrotor_model(cfg.quadrotor);
    }
    return {};
}

} // namespace se3ham
