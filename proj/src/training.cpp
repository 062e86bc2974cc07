#include "se3ham/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "se3ham/errors.hpp"
#include "se3ham/odeint.hpp"

namespace se3ham {

using ad::Var;

double orientation_loss(const std::vector<Mat3> &Rbar, const std::vector<Mat3> &R) {
    if (Rbar.size() != R.size()) throw Error(ErrorCode::DimMismatch, "orientation loss sizes");
    double L = 0.0;
    for (std::size_t i = 0; i < R.size(); ++i) {
        const Mat3 E = project_so3<double>(Rbar[i] * R[i].transpose());
        L += log_so3(E).squaredNorm();
    }
    return L;
}

std::pair<double, double> position_velocity_losses(const std::vector<Eigen::VectorXd> &pbar,
                                                   const std::vector<Eigen::VectorXd> &p,
                                                   const std::vector<Eigen::VectorXd> &zbar,
                                                   const std::vector<Eigen::VectorXd> &z) {
    if (pbar.size() != p.size() || zbar.size() != z.size())
        throw Error(ErrorCode::DimMismatch, "loss sizes");
    double Lp = 0.0, Lz = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) Lp += (pbar[i] - p[i]).squaredNorm();
    for (std::size_t i = 0; i < z.size(); ++i) Lz += (zbar[i] - z[i]).squaredNorm();
    return {Lp, Lz};
}

namespace {

struct ShardResult {
    LossBreakdown sum;
    ParamVector grad;
};

Eigen::MatrixXd stack(const Dataset &ds, const std::vector<int> &idx, int n, bool zeta) {
    const auto &r0 = ds.records[static_cast<std::size_t>(idx[0])];
    const Eigen::Index rows = zeta ? r0.zeta[0].size() : r0.q[0].size();
    Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto &r = ds.records[static_cast<std::size_t>(idx[k])];
        m.col(static_cast<Eigen::Index>(k)) = zeta ? r.zeta[static_cast<std::size_t>(n)] : r.q[static_cast<std::size_t>(n)];
    }
    return m;
}

ShardResult shard_loss(const HamiltonianModel &model, const Dataset &ds, const std::vector<int> &idx,
                       const TrainConfig &cfg, bool with_grad) {
    ad::Tape tape(cfg.max_tape_nodes);
    BoundModel bm(model, tape);
    const auto &times = ds.records[static_cast<std::size_t>(idx[0])].t;
    const Eigen::Index B = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd U(model.control_dim, B);
    for (Eigen::Index k = 0; k < B; ++k) U.col(k) = ds.records[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])].u;
    Var q0 = tape.leaf(stack(ds, idx, 0, false));
    Var z0 = tape.leaf(stack(ds, idx, 0, true));
    Var u = tape.leaf(U);
    TapeTrajectory tr = rollout_tape(bm, q0, z0, u, times, cfg.substeps);

    const bool se3 = model.kind == SystemKind::SE3;
    const int roff = se3 ? 3 : 0;
    Var ones = tape.leaf(Eigen::MatrixXd::Ones(1, B));
    std::vector<Var> LR, Lp, Lz;
    for (std::size_t n = 1; n < times.size(); ++n) {
        Var qbar = tape.leaf(stack(ds, idx, static_cast<int>(n), false));
        Var zbar = tape.leaf(stack(ds, idx, static_cast<int>(n), true));
        Var tr_prod = ad::reduce_to(ad::mul(ad::rows(tr.q[n], roff, 9), ad::rows(qbar, roff, 9)), 1, B);
        Var c = 0.5 * (tr_prod - ones);
        LR.push_back(ad::sum_all(ad::angle_sq(c)));
        if (se3) {
            Var dp = ad::rows(tr.q[n], 0, 3) - ad::rows(qbar, 0, 3);
            Lp.push_back(ad::sum_all(ad::mul(dp, dp)));
        }
        Var dz = tr.zeta[n] - zbar;
        Lz.push_back(ad::sum_all(ad::mul(dz, dz)));
    }
    auto total_of = [](const std::vector<Var> &v) {
        Var s = v.front();
        for (std::size_t i = 1; i < v.size(); ++i) s = s + v[i];
        return s;
    };
    ShardResult res;
    Var sR = total_of(LR), sz = total_of(Lz);
    Var total = sR + sz;
    res.sum.L_R = sR.value()(0, 0);
    res.sum.L_zeta = sz.value()(0, 0);
    if (se3) {
        Var sp = total_of(Lp);
        res.sum.L_p = sp.value()(0, 0);
        total = total + sp;
    }
    res.sum.total = total.value()(0, 0);
    if (with_grad) res.grad = bm.flatten_grad(tape.grad_values(total, bm.param_leaves()));
    return res;
}

} // namespace

BatchEvaluation evaluate_batch(const HamiltonianModel &model, const Dataset &ds, const std::vector<int> &idx,
                               const TrainConfig &cfg, bool with_grad) {
    if (idx.empty()) throw Error(ErrorCode::DimMismatch, "empty batch");
    const std::size_t shard = static_cast<std::size_t>(std::max(1, cfg.shard_size));
    std::vector<std::vector<int>> shards;
    for (std::size_t i = 0; i < idx.size(); i += shard)
        shards.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                            idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + shard)));
    std::vector<ShardResult> parts(shards.size());
    std::vector<std::exception_ptr> errors(shards.size());
    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t s = begin; s < shards.size(); s += stride) {
            try {
                parts[s] = shard_loss(model, ds, shards[s], cfg, with_grad);
            } catch (...) {
                errors[s] = std::current_exception();
            }
        }
    };
    const std::size_t threads = static_cast<std::size_t>(std::max(1, cfg.threads));
    if (threads == 1 || shards.size() == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < std::min(threads, shards.size()); ++k)
            pool.emplace_back(work, k, std::min(threads, shards.size()));
        for (auto &t : pool) t.join();
    }
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);

    BatchEvaluation out;
    const double inv = 1.0 / static_cast<double>(idx.size());
    if (with_grad) out.grad = ParamVector::Zero(model.param_count());
    for (const auto &p : parts) {
        out.loss.L_R += p.sum.L_R * inv;
        out.loss.L_p += p.sum.L_p * inv;
        out.loss.L_zeta += p.sum.L_zeta * inv;
        out.loss.total += p.sum.total * inv;
        if (with_grad) out.grad += p.grad * inv;
    }
    return out;
}

std::pair<double, double> pretrain_mass_nets(HamiltonianModel &model, const Dataset &ds, const TrainConfig &cfg) {
    std::mt19937_64 rng(stream_seed(cfg.seed, 77));
    std::vector<Eigen::VectorXd> pool;
    for (const auto &r : ds.records)
        for (const auto &q : r.q) pool.push_back(q);
    AdamConfig ac = cfg.adam;
    ac.lr = cfg.pretrain_lr;
    auto sampler_for = [&](const Field &f) {
        return [&, rows = f.input_rows](int batch) {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), batch);
            for (int b = 0; b < batch; ++b) {
                const Eigen::VectorXd &q = pool[pick(rng)];
                for (std::size_t i = 0; i < rows.size(); ++i) x(static_cast<Eigen::Index>(i), b) = q(rows[i]);
            }
            return x;
        };
    };
    double e1 = 0.0, e2 = 0.0;
    if (model.kind == SystemKind::SE3 && model.M1_inv.is_learned())
        e1 = pretrain_mass(model.M1_inv.net, model.epsilon, Mat3::Identity(), sampler_for(model.M1_inv),
                           cfg.pretrain_iterations, cfg.pretrain_batch, ac)
                 .mean_frobenius_error;
    if (model.M2_inv.is_learned())
        e2 = pretrain_mass(model.M2_inv.net, model.epsilon, Mat3::Identity(), sampler_for(model.M2_inv),
                           cfg.pretrain_iterations, cfg.pretrain_batch, ac)
                 .mean_frobenius_error;
    return {e1, e2};
}

TrainResult train(HamiltonianModel model, const Dataset &ds, const TrainConfig &cfg, const TrainCallback &callback) {
    if (ds.records.empty()) throw Error(ErrorCode::Config, "dataset is empty");
    if (system_kind(ds.system) != model.kind || control_dim(ds.system) != model.control_dim)
        throw Error(ErrorCode::DimMismatch, "dataset does not match the model");
    TrainResult res;
    if (cfg.pretrain_mass) std::tie(res.pretrain_error_M1, res.pretrain_error_M2) = pretrain_mass_nets(model, ds, cfg);

    const int D = static_cast<int>(ds.records.size());
    const int batch = (cfg.batch_size <= 0 || cfg.batch_size > D) ? D : cfg.batch_size;
    std::vector<int> order(static_cast<std::size_t>(D));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(stream_seed(cfg.seed, 99 + static_cast<std::uint64_t>(cfg.start_iteration)));
    std::size_t cursor = order.size();

    ParamVector params = model.params();
    AdamState adam = cfg.resume_adam.value_or(AdamState{});
    res.iterations_done = cfg.start_iteration;
    for (int it = cfg.start_iteration; it < cfg.start_iteration + cfg.iterations; ++it) {
        if (cursor + static_cast<std::size_t>(batch) > order.size()) {
            if (batch < D) std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                             order.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(batch)));
        cursor += static_cast<std::size_t>(batch);

        BatchEvaluation ev;
        try {
            ev = evaluate_batch(model, ds, idx, cfg, true);
        } catch (const Error &e) {
            if (e.code() != ErrorCode::NonFinite && e.code() != ErrorCode::SingularMass) throw;
            res.diverged = true;
            res.message = e.what();
            break;
        }
        if (!std::isfinite(ev.loss.total) || ev.loss.total > cfg.divergence_threshold || !ev.grad.allFinite()) {
            res.diverged = true;
            res.message = "loss diverged at iteration " + std::to_string(it);
            break;
        }
        HistoryRow row{it, ev.loss};
        res.history.push_back(row);
        if (callback) callback(row);

        if (cfg.optimizer == "sgd")
            sgd_step(params, ev.grad, cfg.sgd_lr);
        else
            adam_step(params, ev.grad, adam, cfg.adam);
        if (!params.allFinite()) {
            res.diverged = true;
            res.message = "parameters became non-finite at iteration " + std::to_string(it);
            params = model.params();
            break;
        }
        model.set_params(params);
        res.iterations_done = it + 1;
    }
    res.adam = std::move(adam);
    res.model = std::move(model);
    return res;
}

Eigen::VectorXd control_scale(const Dataset &ds) {
    if (ds.records.empty()) throw Error(ErrorCode::Config, "dataset is empty");
    Eigen::VectorXd s = Eigen::VectorXd::Zero(ds.records.front().u.size());
    for (const auto &r : ds.records) s = s.cwiseMax(r.u.cwiseAbs());
    for (Eigen::Index j = 0; j < s.size(); ++j)
        if (s(j) <= 0.0) s(j) = 1.0;
    return s;
}

std::vector<LearnedSample> evaluate_learned_functions(const HamiltonianModel &model,
                                                      const std::vector<Eigen::VectorXd> &qs) {
    std::vector<LearnedSample> out;
    for (const auto &q : qs) {
        LearnedSample s;
        s.q = q;
        const MassInverse M = mass_inverse(model, q);
        s.M1_inv = M.M1_inv;
        s.M2_inv = M.M2_inv;
        s.V = potential(model, q);
        s.g = input_matrix(model, q);
        out.push_back(std::move(s));
    }
    return out;
}

PendulumSweep pendulum_sweep(const HamiltonianModel &model, const PendulumParams &truth, int points) {
    PendulumSweep sw;
    const double V0 = potential(model, pendulum_state(0.0, 0.0).q);
    std::vector<double> dVt;
    for (int i = 0; i < points; ++i) {
        const double phi = -M_PI + 2.0 * M_PI * (i + 1) / points;
        const Eigen::VectorXd q = pendulum_state(phi, 0.0).q;
        const MassInverse M = mass_inverse(model, q);
        const Eigen::MatrixXd g = input_matrix(model, q);
        sw.phi.push_back(phi);
        sw.product.push_back(M.M2_inv(2, 2) * g(2, 0));
        sw.dV.push_back(potential(model, q) - V0);
        dVt.push_back(truth.a / truth.b * (1.0 - std::cos(phi)));
    }
    sw.mean_product = std::accumulate(sw.product.begin(), sw.product.end(), 0.0) / points;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < points; ++i) {
        num += sw.dV[i] * dVt[i];
        den += dVt[i] * dVt[i];
    }
    sw.beta = num / den;
    double err = 0.0, ref = 0.0;
    for (int i = 0; i < points; ++i) {
        err += std::pow(sw.dV[i] - sw.beta * dVt[i], 2);
        ref += std::pow(sw.beta * dVt[i], 2);
    }
    sw.potential_rms_rel = std::sqrt(err / ref);
    return sw;
}

double rhs_relative_error(const HamiltonianModel &model, const DatasetConfig &cfg, int states,
                          std::uint64_t stream_offset) {
    const int m = control_dim(cfg.system);
    Eigen::MatrixXd Q(model.qdim(), states), Z(model.zdim(), states), U(m, states);
    for (int i = 0; i < states; ++i) {
        const Sample s = sample_state(cfg, stream_offset + static_cast<std::uint64_t>(i));
        Q.col(i) = s.x.q;
        Z.col(i) = s.x.zeta;
        U.col(i) = s.u;
    }
    const auto [qd, zd] = rhs_batch(model, Q, Z, U);
    double err = 0.0, ref = 0.0;
    for (int i = 0; i < states; ++i) {
        const StateDerivative t = ground_truth_rhs(cfg, Q.col(i), Z.col(i), U.col(i));
        err += (zd.col(i) - t.zdot).squaredNorm();
        ref += t.zdot.squaredNorm();
    }
    return std::sqrt(err / ref);
}

namespace {

double offdiag_ratio(const Eigen::MatrixXd &M) {
    double diag = 0.0, off = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            if (i == j)
                diag = std::max(diag, std::abs(M(i, j)));
            else
                off = std::max(off, std::abs(M(i, j)));
        }
    return off / diag;
}

// Row i compares |g_ij| s_j against |g_ii| s_i, i.e. the response to
// controls of typical size s.
double weighted_row_offdiag(const Eigen::MatrixXd &g, const Eigen::VectorXd &s) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double d = std::abs(g(i, i)) * s(i);
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            if (j != i) worst = std::max(worst, std::abs(g(i, j)) * s(j) / d);
    }
    return worst;
}

} // namespace

RigidBodyStructure rigid_body_structure(const HamiltonianModel &model, const DatasetConfig &cfg, int states,
                                        std::uint64_t stream_offset) {
    if (model.kind != SystemKind::SE3 || model.control_dim != 6)
        throw Error(ErrorCode::DimMismatch, "structure check needs a fully actuated SE(3) model");
    const RigidBodyParams &p = cfg.rigid_body;
    std::vector<Eigen::VectorXd> qs;
    for (int i = 0; i < states; ++i) qs.push_back(sample_state(cfg, stream_offset + static_cast<std::uint64_t>(i)).x.q);
    const auto samples = evaluate_learned_functions(model, qs);
    RigidBodyStructure st;
    for (const auto &s : samples) {
        st.beta += s.M1_inv.diagonal().mean() * p.mass;
        st.alpha += s.M2_inv.diagonal().cwiseProduct(p.inertia).mean();
    }
    st.beta /= states;
    st.alpha /= states;
    st.g_scaled = Eigen::MatrixXd::Zero(6, model.control_dim);
    Eigen::VectorXd u_typ(6);
    u_typ << Vec3::Constant(cfg.sampler.force_mg * p.mass * p.gravity), Vec3::Constant(cfg.sampler.torque);
    for (const auto &s : samples) {
        const Mat3 M1s = s.M1_inv / st.beta, M2s = s.M2_inv / st.alpha;
        Eigen::MatrixXd gs = s.g;
        gs.topRows(3) *= st.beta;
        gs.bottomRows(3) *= st.alpha;
        st.M1_offdiag = std::max(st.M1_offdiag, offdiag_ratio(M1s));
        st.M2_offdiag = std::max(st.M2_offdiag, offdiag_ratio(M2s));
        st.g_offdiag = std::max(st.g_offdiag, weighted_row_offdiag(gs, u_typ));
        st.M1_scaled += M1s / states;
        st.M2_scaled += M2s / states;
        st.g_scaled += gs / states;
    }
    return st;
}

} // namespace se3ham
