#include "se3ham/odeint.hpp"

#include <cmath>

#include "se3ham/errors.hpp"

namespace se3ham {

using ad::Var;

Eigen::VectorXd rk4_step(const VectorField &f, double t, const Eigen::VectorXd &x, const Eigen::VectorXd &u,
                         double dt) {
    const Eigen::VectorXd k1 = f(t, x, u);
    const Eigen::VectorXd k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1, u);
    const Eigen::VectorXd k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2, u);
    const Eigen::VectorXd k4 = f(t + dt, x + dt * k3, u);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace {

void record_drift(RolloutResult &r, const Eigen::VectorXd &x, int off) {
    if (off < 0) return;
    const Mat3 R = rows_to_matrix<double>(x.segment<9>(off));
    r.orthogonality_drift.push_back(orthogonality_error(R));
    r.determinant_drift.push_back(determinant_error(R));
}

} // namespace

RolloutResult rollout(const VectorField &f, const Eigen::VectorXd &x0, const Eigen::VectorXd &u,
                      const std::vector<double> &times, const RolloutOptions &opt) {
    if (times.empty()) throw Error(ErrorCode::DimMismatch, "rollout needs at least one sample time");
    if (opt.substeps < 1) throw Error(ErrorCode::DimMismatch, "substeps must be positive");
    RolloutResult r;
    Eigen::VectorXd x = x0;
    r.times.push_back(times[0]);
    r.states.push_back(x);
    record_drift(r, x, opt.rotation_offset);
    for (std::size_t n = 0; n + 1 < times.size(); ++n) {
        const double h = (times[n + 1] - times[n]) / opt.substeps;
        double t = times[n];
        for (int s = 0; s < opt.substeps; ++s) {
            x = rk4_step(f, t, x, u, h);
            t += h;
            if (opt.project && opt.rotation_offset >= 0) {
                const Mat3 R = project_so3(rows_to_matrix<double>(x.segment<9>(opt.rotation_offset)));
                x.segment<9>(opt.rotation_offset) = matrix_to_rows(R);
            }
        }
        if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "rollout state is not finite");
        r.times.push_back(times[n + 1]);
        r.states.push_back(x);
        record_drift(r, x, opt.rotation_offset);
    }
    return r;
}

VectorField model_field(const HamiltonianModel &model) {
    return [&model](double, const Eigen::VectorXd &x, const Eigen::VectorXd &u) {
        const int qd = model.qdim(), zd = model.zdim();
        StateDerivative d = rhs(model, x.head(qd), x.tail(zd), u);
        Eigen::VectorXd out(qd + zd);
        out << d.qdot, d.zdot;
        return out;
    };
}

TapeTrajectory rollout_tape(const BoundModel &model, const Var &q0, const Var &zeta0, const Var &u,
                            const std::vector<double> &times, int substeps) {
    if (substeps < 1) throw Error(ErrorCode::DimMismatch, "substeps must be positive");
    TapeTrajectory tr;
    Var q = q0, z = zeta0;
    tr.q.push_back(q);
    tr.zeta.push_back(z);
    for (std::size_t n = 0; n + 1 < times.size(); ++n) {
        const double h = (times[n + 1] - times[n]) / substeps;
        for (int s = 0; s < substeps; ++s) {
            RhsVars k1 = model.rhs(q, z, u);
            RhsVars k2 = model.rhs(q + (0.5 * h) * k1.qdot, z + (0.5 * h) * k1.zdot, u);
            RhsVars k3 = model.rhs(q + (0.5 * h) * k2.qdot, z + (0.5 * h) * k2.zdot, u);
            RhsVars k4 = model.rhs(q + h * k3.qdot, z + h * k3.zdot, u);
            q = q + (h / 6.0) * (k1.qdot + 2.0 * k2.qdot + 2.0 * k3.qdot + k4.qdot);
            z = z + (h / 6.0) * (k1.zdot + 2.0 * k2.zdot + 2.0 * k3.zdot + k4.zdot);
        }
        if (!q.value().allFinite() || !z.value().allFinite())
            throw Error(ErrorCode::NonFinite, "rollout state is not finite");
        tr.q.push_back(q);
        tr.zeta.push_back(z);
    }
    return tr;
}

GradRollout rollout_with_grad(const HamiltonianModel &model, const FullState &x0, const Eigen::VectorXd &u,
                              const std::vector<double> &times, int substeps,
                              const std::vector<Eigen::VectorXd> &loss_adjoints, std::size_t max_nodes) {
    if (loss_adjoints.size() != times.size())
        throw Error(ErrorCode::DimMismatch, "one adjoint per sample time is required");
    ad::Tape tape(max_nodes);
    BoundModel bm(model, tape);
    const int qd = model.qdim(), zd = model.zdim();
    Var q0 = tape.leaf(Eigen::MatrixXd(x0.q));
    Var z0 = tape.leaf(Eigen::MatrixXd(x0.zeta));
    Var uv = tape.leaf(Eigen::MatrixXd(u));
    TapeTrajectory tr = rollout_tape(bm, q0, z0, uv, times, substeps);

    GradRollout out;
    std::vector<Var> outs;
    std::vector<Eigen::MatrixXd> seeds;
    for (std::size_t n = 0; n < times.size(); ++n) {
        Eigen::VectorXd x(qd + zd);
        x << tr.q[n].value().col(0), tr.zeta[n].value().col(0);
        out.result.times.push_back(times[n]);
        out.result.states.push_back(x);
        record_drift(out.result, x, model.kind == SystemKind::SE3 ? 3 : 0);
        if (loss_adjoints[n].size() != qd + zd) throw Error(ErrorCode::DimMismatch, "adjoint size");
        outs.push_back(tr.q[n]);
        seeds.push_back(Eigen::MatrixXd(loss_adjoints[n].head(qd)));
        outs.push_back(tr.zeta[n]);
        seeds.push_back(Eigen::MatrixXd(loss_adjoints[n].tail(zd)));
    }
    out.grad_params = bm.flatten_grad(tape.grad_values(outs, seeds, bm.param_leaves()));
    return out;
}

double observed_order(const std::vector<double> &dts, const std::vector<double> &errors) {
    const std::size_t n = dts.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(dts[i]), y = std::log(errors[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace se3ham
