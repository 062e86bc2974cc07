#include "se3ham/control.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "se3ham/errors.hpp"
#include "se3ham/odeint.hpp"

namespace se3ham {

namespace {

Mat3 rotation_of(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    return rows_to_matrix<double>(model.kind == SystemKind::SE3 ? Vector9<double>(q.segment<9>(3))
                                                                : Vector9<double>(q.head<9>()));
}

Mat3 sym_scaled(const Vec3 &d, const Mat3 &M) {
    for (int i = 0; i < 3; ++i)
        if (d(i) < 0.0) throw Error(ErrorCode::Config, "gains must be nonnegative");
    const Eigen::DiagonalMatrix<double, 3> D(d.cwiseSqrt());
    return D * M * D;
}

// Row i is d/dr_i of 1/2 tr(KR (I - R*^T R)).
Mat3 attitude_potential_grad(const Mat3 &Rstar, const Mat3 &KR) { return -0.5 * Rstar * KR.transpose(); }

struct RegulationTerms {
    Eigen::VectorXd dHa; // d Ha / dq
    Eigen::VectorXd b;   // generalized force before damping
};

RegulationTerms regulation_terms(const HamiltonianModel &model, const Eigen::VectorXd &q,
                                 const RegulationTarget &target, const ResolvedGains &gains) {
    const Eigen::VectorXd dV = dV_dq(model, q);
    const Mat3 R = rotation_of(model, q);
    const Mat3 G = attitude_potential_grad(target.R, gains.KR);
    RegulationTerms out;
    out.dHa = -dV;
    const int roff = model.kind == SystemKind::SE3 ? 3 : 0;
    for (int i = 0; i < 3; ++i) out.dHa.segment<3>(roff + 3 * i) += G.row(i).transpose();
    Vec3 bw = Vec3::Zero();
    for (int i = 0; i < 3; ++i)
        bw += Vec3(R.row(i).transpose()).cross(Vec3(out.dHa.segment<3>(roff + 3 * i)));
    if (model.kind == SystemKind::SE3) {
        const Vec3 x = q.head<3>();
        out.dHa.head<3>() += gains.Kp * (x - target.p);
        out.b.resize(6);
        out.b << -R.transpose() * Vec3(out.dHa.head<3>()), bw;
    } else {
        out.b = bw;
    }
    return out;
}

Eigen::MatrixXd mass_of(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    const MassInverse Mi = mass_inverse(model, q);
    if (model.kind == SystemKind::SO3) return Mi.M2_inv.inverse();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(6, 6);
    M.topLeftCorner<3, 3>() = Mi.M1_inv.inverse();
    M.bottomRightCorner<3, 3>() = Mi.M2_inv.inverse();
    return M;
}

Eigen::MatrixXd mass_inverse_of(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    const MassInverse Mi = mass_inverse(model, q);
    if (model.kind == SystemKind::SO3) return Mi.M2_inv;
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(6, 6);
    W.topLeftCorner<3, 3>() = Mi.M1_inv;
    W.bottomRightCorner<3, 3>() = Mi.M2_inv;
    return W;
}

void require_se3(const HamiltonianModel &model) {
    if (model.kind != SystemKind::SE3) throw Error(ErrorCode::DimMismatch, "tracking control needs an SE(3) model");
}

} // namespace

Eigen::MatrixXd ResolvedGains::Kd(SystemKind kind) const {
    if (kind == SystemKind::SO3) return Kw;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(6, 6);
    K.topLeftCorner<3, 3>() = Kv;
    K.bottomRightCorner<3, 3>() = Kw;
    return K;
}

ResolvedGains resolve_gains(const ControlGains &gains, const HamiltonianModel &model, const Eigen::VectorXd &q_ref) {
    ResolvedGains out;
    if (!gains.mass_relative) {
        out.Kp = sym_scaled(gains.Kp, Mat3::Identity());
        out.Kv = sym_scaled(gains.Kv, Mat3::Identity());
        out.KR = sym_scaled(gains.KR, Mat3::Identity());
        out.Kw = sym_scaled(gains.Kw, Mat3::Identity());
        return out;
    }
    const MassInverse Mi = mass_inverse(model, q_ref);
    const Mat3 M1 = Mi.M1_inv.inverse(), M2 = Mi.M2_inv.inverse();
    out.Kp = sym_scaled(gains.Kp, M1);
    out.Kv = sym_scaled(gains.Kv, M1);
    out.KR = sym_scaled(gains.KR, M2);
    out.Kw = sym_scaled(gains.Kw, M2);
    return out;
}

Eigen::MatrixXd pinv_g(const Eigen::MatrixXd &g) {
    if (g.rows() < g.cols()) throw Error(ErrorCode::RankDeficient, "input matrix has more columns than rows");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    if (!(s(s.size() - 1) > 1e-8)) throw Error(ErrorCode::RankDeficient, "input matrix is rank deficient");
    return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

Eigen::VectorXd solve_inputs(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &wrench) {
    const Eigen::MatrixXd W = mass_inverse_of(model, q);
    return pinv_g(W * input_matrix(model, q)) * (W * wrench);
}

Eigen::VectorXd esdi_control(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                             const RegulationTarget &target, const ResolvedGains &gains) {
    const RegulationTerms t = regulation_terms(model, q, target, gains);
    return solve_inputs(model, q, t.b - gains.Kd(model.kind) * zeta);
}

double esdi_energy(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                   const RegulationTarget &target, const ResolvedGains &gains) {
    const Eigen::VectorXd p = momentum(model, q, zeta);
    const Mat3 R = rotation_of(model, q);
    double Hd = 0.5 * p.dot(zeta) + 0.5 * (gains.KR * (Mat3::Identity() - target.R.transpose() * R)).trace();
    if (model.kind == SystemKind::SE3) {
        const Vec3 dx = q.head<3>() - target.p;
        Hd += 0.5 * dx.dot(gains.Kp * dx);
    }
    return Hd;
}

double esdi_matching_residual(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                              const RegulationTarget &target, const ResolvedGains &gains) {
    const Eigen::VectorXd u = esdi_control(model, q, zeta, target, gains);
    const StateDerivative d = rhs(model, q, zeta, u);
    const Eigen::VectorXd p = momentum(model, q, zeta);
    const MassInverse dMi = time_deriv_mass_inverse(model, q, d.qdot);
    const Eigen::MatrixXd M = mass_of(model, q);
    Eigen::VectorXd Minv_dot_p(zeta.size());
    if (model.kind == SystemKind::SE3)
        Minv_dot_p << dMi.M1_inv * p.head<3>(), dMi.M2_inv * p.tail<3>();
    else
        Minv_dot_p = dMi.M2_inv * p;
    const Eigen::VectorXd pdot_plant = M * (d.zdot - Minv_dot_p);

    const Eigen::VectorXd dHd = dH_dq(model, q, p) + regulation_terms(model, q, target, gains).dHa;
    const Mat3 R = rotation_of(model, q);
    const Matrix12x6<double> Q = q_cross<double>(R);
    Eigen::VectorXd pdot_desired;
    if (model.kind == SystemKind::SE3) {
        pdot_desired = -Q.transpose() * dHd + p_cross<double>(p) * zeta;
    } else {
        const Eigen::Matrix<double, 9, 3> Qr = Q.bottomRightCorner<9, 3>();
        pdot_desired = -Qr.transpose() * dHd + Vec3(p).cross(Vec3(zeta));
    }
    pdot_desired -= gains.Kd(model.kind) * zeta;
    return (pdot_plant - pdot_desired).norm();
}

DesiredTrajectory DesiredTrajectory::hover(const Vec3 &p, double psi) {
    DesiredTrajectory d;
    d.at = [p, psi](double) {
        TrajectoryPoint tp;
        tp.p = p;
        tp.psi = psi;
        return tp;
    };
    return d;
}

DesiredTrajectory DesiredTrajectory::circle(const Vec3 &center, double radius, double period, double psi) {
    if (!(period > 0.0) || !(radius >= 0.0)) throw Error(ErrorCode::Config, "circle needs radius >= 0 and period > 0");
    const double w = 2.0 * M_PI / period;
    DesiredTrajectory d;
    d.at = [=](double t) {
        const double c = std::cos(w * t), s = std::sin(w * t);
        TrajectoryPoint tp;
        tp.p = center + radius * Vec3(c, s, 0.0);
        tp.v = radius * w * Vec3(-s, c, 0.0);
        tp.a = -radius * w * w * Vec3(c, s, 0.0);
        tp.psi = psi;
        return tp;
    };
    return d;
}

Vector6<double> coordinate_error(const Eigen::VectorXd &q, const TrackingTarget &target, const ResolvedGains &gains) {
    const Mat3 R = rows_to_matrix<double>(Vector9<double>(q.segment<9>(3)));
    Vector6<double> e;
    e << R.transpose() * gains.Kp * (Vec3(q.head<3>()) - target.p), rotation_error_vec<double>(R, target.R, gains.KR);
    return e;
}

Vector6<double> desired_twist(const Eigen::VectorXd &q, const TrackingTarget &target) {
    const Mat3 R = rows_to_matrix<double>(Vector9<double>(q.segment<9>(3)));
    Vector6<double> z;
    z << R.transpose() * target.p_dot, R.transpose() * target.R * target.omega;
    return z;
}

Vector6<double> tracking_wrench(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                                const TrackingTarget &target, const ResolvedGains &gains) {
    require_se3(model);
    const Mat3 R = rows_to_matrix<double>(Vector9<double>(q.segment<9>(3)));
    const Vec3 v = zeta.head<3>(), w = zeta.tail<3>();
    const MassInverse Mi = mass_inverse(model, q);
    const Mat3 M1 = Mi.M1_inv.inverse(), M2 = Mi.M2_inv.inverse();
    const Vec3 pv = M1 * v, pw = M2 * w;
    const Eigen::VectorXd dV = dV_dq(model, q);

    const Vec3 vs = R.transpose() * target.p_dot;
    const Vec3 ws = R.transpose() * target.R * target.omega;
    const Mat3 W = hat3<double>(w);
    const Vec3 pv_star_dot = M1 * (R.transpose() * target.p_ddot - W * vs);
    const Vec3 pw_star_dot = M2 * (R.transpose() * target.R * target.omega_dot - W * ws);

    Vec3 rot_gravity = Vec3::Zero();
    for (int i = 0; i < 3; ++i) rot_gravity -= Vec3(R.row(i).transpose()).cross(Vec3(dV.segment<3>(3 + 3 * i)));

    const Vector6<double> e = coordinate_error(q, target, gains);
    Vector6<double> b;
    b.head<3>() = R.transpose() * Vec3(dV.head<3>()) - pv.cross(w) - e.head<3>() - gains.Kv * (v - vs) + pv_star_dot;
    b.tail<3>() = rot_gravity - (pw.cross(w) + pv.cross(v)) - e.tail<3>() - gains.Kw * (w - ws) + pw_star_dot;
    return b;
}

Eigen::VectorXd idapbc_control(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                               const TrackingTarget &target, const ResolvedGains &gains) {
    return solve_inputs(model, q, tracking_wrench(model, q, zeta, target, gains));
}

MatchingResiduals tracking_matching_residuals(const HamiltonianModel &model, const Eigen::VectorXd &q,
                                              const Eigen::VectorXd &zeta, const TrackingTarget &target,
                                              const ResolvedGains &gains) {
    require_se3(model);
    const Mat3 R = rows_to_matrix<double>(Vector9<double>(q.segment<9>(3)));
    const Mat3 &Rs = target.R;
    const Mat3 Re = Rs.transpose() * R;
    const Vector6<double> zs = desired_twist(q, target);
    const Vector6<double> dz = zeta - zs;

    Matrix12x6<double> J1 = q_cross<double>(Re);
    J1.topLeftCorner<3, 3>() = R;

    const Mat3 Rdot = R * hat3<double>(Vec3(zeta.tail<3>()));
    const Mat3 Rs_dot = Rs * hat3<double>(target.omega);
    const Mat3 Re_dot = Rs_dot.transpose() * R + Rs.transpose() * Rdot;
    Vector12<double> qe_dot;
    qe_dot << R * Vec3(zeta.head<3>()) - target.p_dot, matrix_to_rows<double>(Re_dot);

    MatchingResiduals out;
    out.cond1 = (qe_dot - J1 * dz).norm();

    const Eigen::VectorXd p = momentum(model, q, zeta);
    const Eigen::MatrixXd M = mass_of(model, q);
    Vector6<double> accel;
    const Mat3 W = hat3<double>(Vec3(zeta.tail<3>()));
    accel << R.transpose() * target.p_ddot - W * R.transpose() * target.p_dot,
        R.transpose() * Rs * target.omega_dot - W * R.transpose() * Rs * target.omega;
    const Eigen::VectorXd p_star_dot = M * accel;

    Vector12<double> dVd;
    const Mat3 G = -0.5 * gains.KR.transpose();
    dVd << gains.Kp * (Vec3(q.head<3>()) - target.p), matrix_to_rows<double>(G);

    const Vector6<double> pv = p;
    const Eigen::VectorXd want = q_cross<double>(R).transpose() * dH_dq(model, q, p) - J1.transpose() * dVd -
                                 p_cross<double>(pv) * zeta - gains.Kd(model.kind) * dz + p_star_dot;
    const Eigen::VectorXd u = idapbc_control(model, q, zeta, target, gains);
    out.cond2 = (input_matrix(model, q) * u - want).norm();
    return out;
}

DesiredAttitude desired_rotation(const Mat3 &R, const Vec3 &b_v, double psi, double psi_dot, double t,
                                 AttitudeCache &cache) {
    const Vec3 y = R * b_v;
    const double ny = y.norm();
    if (!(ny > 1e-8)) throw Error(ErrorCode::DegenerateThrust, "desired thrust vanishes");
    const Vec3 b3 = y / ny;
    const Vec3 b2psi(-std::sin(psi), std::cos(psi), 0.0);
    const Vec3 c = b2psi.cross(b3);
    const double nc = c.norm();
    if (!(nc > 1e-8)) throw Error(ErrorCode::GimbalDegenerate, "heading is parallel to the thrust axis");
    const Vec3 b1 = c / nc;
    const Vec3 b2 = b3.cross(b1);

    DesiredAttitude out;
    out.R.col(0) = b1;
    out.R.col(1) = b2;
    out.R.col(2) = b3;

    const double h = cache.valid ? t - cache.t : 0.0;
    const Vec3 y_dot = h > 0.0 ? Vec3((y - cache.thrust) / h) : Vec3::Zero();
    const Vec3 b3_dot = b3.cross(y_dot / ny).cross(b3);
    const Vec3 b2psi_dot = psi_dot * Vec3(-std::cos(psi), -std::sin(psi), 0.0);
    const Vec3 c_dot = b2psi_dot.cross(b3) + b2psi.cross(b3_dot);
    const Vec3 b1_dot = b1.cross(c_dot / nc).cross(b1);
    const Vec3 b2_dot = b3_dot.cross(b1) + b3.cross(b1_dot);
    Mat3 R_dot;
    R_dot.col(0) = b1_dot;
    R_dot.col(1) = b2_dot;
    R_dot.col(2) = b3_dot;
    out.omega = vee_skew_part<double>(out.R.transpose() * R_dot);
    out.omega_dot = h > 0.0 ? Vec3((out.omega - cache.last.omega) / h) : Vec3::Zero();

    cache.valid = true;
    cache.t = t;
    cache.thrust = y;
    cache.last = out;
    return out;
}

Controller make_esdi_controller(const HamiltonianModel &model, const RegulationTarget &target,
                                const ResolvedGains &gains) {
    return [model, target, gains](double, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta) {
        ControlOutput out;
        out.u = esdi_control(model, q, zeta, target, gains);
        out.p_star = target.p;
        out.R_star = target.R;
        out.zeta_star = Eigen::VectorXd::Zero(zeta.size());
        out.energy = esdi_energy(model, q, zeta, target, gains);
        return out;
    };
}

Controller make_tracking_controller(const HamiltonianModel &model, const DesiredTrajectory &traj,
                                    const ResolvedGains &gains) {
    require_se3(model);
    auto cache = std::make_shared<AttitudeCache>();
    return [model, traj, gains, cache](double t, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta) {
        const TrajectoryPoint tp = traj.at(t);
        TrackingTarget target;
        target.p = tp.p;
        target.p_dot = tp.v;
        target.p_ddot = tp.a;
        const Vec3 b_v = tracking_wrench(model, q, zeta, target, gains).head<3>();
        const Mat3 R = rows_to_matrix<double>(Vector9<double>(q.segment<9>(3)));
        DesiredAttitude att;
        try {
            att = desired_rotation(R, b_v, tp.psi, tp.psi_dot, t, *cache);
        } catch (const Error &e) {
            if (e.code() != ErrorCode::DegenerateThrust || !cache->valid) throw;
            att.R = cache->last.R;
        }
        target.R = att.R;
        target.omega = att.omega;
        target.omega_dot = att.omega_dot;
        ControlOutput out;
        out.u = idapbc_control(model, q, zeta, target, gains);
        out.p_star = tp.p;
        out.R_star = att.R;
        out.zeta_star = desired_twist(q, target);
        out.energy = std::numeric_limits<double>::quiet_NaN();
        return out;
    };
}

ClosedLoopResult closed_loop(SystemKind kind, const PlantRhs &plant, const Controller &controller,
                             const FullState &x0, const ClosedLoopOptions &opt) {
    if (!(opt.horizon > 0.0) || !(opt.dt > 0.0)) throw Error(ErrorCode::Config, "horizon and dt must be positive");
    if (opt.rate_divisor < 0) throw Error(ErrorCode::Config, "rate divisor must be nonnegative");
    const int qd = q_dim(kind);
    const bool se3 = kind == SystemKind::SE3;
    VectorField f = [&](double, const Eigen::VectorXd &x, const Eigen::VectorXd &u) {
        const StateDerivative d = plant(x.head(qd), x.tail(x.size() - qd), u);
        Eigen::VectorXd dx(x.size());
        dx << d.qdot, d.zdot;
        return dx;
    };
    VectorField f_continuous = [&](double t, const Eigen::VectorXd &x, const Eigen::VectorXd &) {
        return f(t, x, controller(t, x.head(qd), x.tail(x.size() - qd)).u);
    };

    const long steps = std::lround(opt.horizon / opt.dt);
    ClosedLoopResult res;
    Eigen::VectorXd x = x0.flat();
    Eigen::VectorXd u_hold;
    double total_us = 0.0;
    for (long k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * opt.dt;
        const bool tick = opt.rate_divisor == 0 || k % opt.rate_divisor == 0;
        if (tick) {
            const Eigen::VectorXd q = x.head(qd), zeta = x.tail(x.size() - qd);
            const auto t0 = std::chrono::steady_clock::now();
            const ControlOutput out = controller(t, q, zeta);
            const auto t1 = std::chrono::steady_clock::now();
            const double us = opt.timing ? std::chrono::duration<double, std::micro>(t1 - t0).count() : 0.0;
            total_us += us;
            ++res.controller_calls;
            if (!out.u.allFinite()) throw Error(ErrorCode::NonFinite, "control input at t=" + std::to_string(t));
            u_hold = out.u;

            TraceRow row;
            row.t = t;
            const Mat3 R = rows_to_matrix<double>(se3 ? Vector9<double>(q.segment<9>(3)) : Vector9<double>(q.head<9>()));
            if (se3) {
                row.p = q.head<3>();
                row.p_star = out.p_star;
                row.v_err = (zeta.head<3>() - out.zeta_star.head<3>()).norm();
            }
            row.rot_err = rotation_error_scalar<double>(R, out.R_star);
            row.w_err = (zeta.tail<3>() - out.zeta_star.tail<3>()).norm();
            row.u = out.u;
            row.ctrl_us = us;
            row.energy = out.energy;
            res.trace.push_back(row);
        }
        if (k == steps) break;
        x = opt.rate_divisor == 0 ? rk4_step(f_continuous, t, x, u_hold, opt.dt) : rk4_step(f, t, x, u_hold, opt.dt);
        if (!x.allFinite())
            throw Error(ErrorCode::NonFinite, "closed-loop state at t=" + std::to_string(t + opt.dt));
    }
    res.final_state = FullState{x.head(qd), x.tail(x.size() - qd)};
    res.mean_ctrl_us = res.controller_calls > 0 ? total_us / res.controller_calls : 0.0;
    return res;
}

double rms_position_error(const ClosedLoopResult &res, double t_from) {
    double s = 0.0;
    int n = 0;
    for (const auto &r : res.trace)
        if (r.t >= t_from) {
            s += (r.p - r.p_star).squaredNorm();
            ++n;
        }
    if (n == 0) throw Error(ErrorCode::DimMismatch, "no trace rows after t_from");
    return std::sqrt(s / n);
}

} // namespace se3ham
