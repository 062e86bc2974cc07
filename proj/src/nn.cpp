#include "se3ham/nn.hpp"

#include <cmath>
#include <random>

#include "se3ham/errors.hpp"

namespace se3ham {

using ad::Var;

Eigen::Index MlpSpec::param_count() const {
    Eigen::Index n = 0;
    for (int l = 0; l < layers(); ++l) n += static_cast<Eigen::Index>(widths[l + 1]) * (widths[l] + 1);
    return n;
}

Eigen::Index Mlp::weight_offset(int l) const {
    Eigen::Index off = 0;
    for (int k = 0; k < l; ++k) off += static_cast<Eigen::Index>(spec.widths[k + 1]) * (spec.widths[k] + 1);
    return off;
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Mlp::weight(int l) const {
    return {params.data() + weight_offset(l), spec.widths[l + 1], spec.widths[l]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
    const Eigen::Index off = weight_offset(l) + static_cast<Eigen::Index>(spec.widths[l + 1]) * spec.widths[l];
    return {params.data() + off, spec.widths[l + 1]};
}

void Mlp::init_uniform(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params.resize(spec.param_count());
    Eigen::Index off = 0;
    for (int l = 0; l < spec.layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.widths[l]));
        std::uniform_real_distribution<double> U(-bound, bound);
        const Eigen::Index n = static_cast<Eigen::Index>(spec.widths[l + 1]) * (spec.widths[l] + 1);
        for (Eigen::Index i = 0; i < n; ++i) params(off + i) = U(rng);
        off += n;
    }
}

Eigen::MatrixXd mlp_forward(const Mlp &net, const Eigen::MatrixXd &x) {
    if (x.rows() != net.spec.inputs()) throw Error(ErrorCode::DimMismatch, "mlp input size");
    Eigen::MatrixXd h = x;
    for (int l = 0; l < net.spec.layers(); ++l) {
        Eigen::MatrixXd z = net.weight(l) * h;
        z.colwise() += net.bias(l);
        if (l + 1 < net.spec.layers())
            h = z.array().tanh().matrix();
        else
            h = std::move(z);
    }
    return h;
}

std::vector<Var> MlpBinding::leaves() const {
    std::vector<Var> out;
    for (std::size_t l = 0; l < W.size(); ++l) {
        out.push_back(W[l]);
        out.push_back(b[l]);
    }
    return out;
}

MlpBinding bind(ad::Tape &tape, const Mlp &net) {
    MlpBinding nb;
    for (int l = 0; l < net.spec.layers(); ++l) {
        nb.W.push_back(tape.leaf(Eigen::MatrixXd(net.weight(l))));
        nb.b.push_back(tape.leaf(Eigen::MatrixXd(net.bias(l))));
    }
    return nb;
}

Var mlp_forward(const MlpBinding &net, const Var &x) {
    Var h = x;
    const std::size_t L = net.W.size();
    for (std::size_t l = 0; l < L; ++l) {
        Var z = ad::matmul(net.W[l], h) + ad::expand(net.b[l], net.W[l].rows(), h.cols());
        h = (l + 1 < L) ? ad::tanh(z) : z;
    }
    return h;
}

Tangent mlp_forward_tangent(const MlpBinding &net, const Var &x, const Var &xdot) {
    Var h = x, hd = xdot;
    const std::size_t L = net.W.size();
    for (std::size_t l = 0; l < L; ++l) {
        Var z = ad::matmul(net.W[l], h) + ad::expand(net.b[l], net.W[l].rows(), h.cols());
        Var zd = ad::matmul(net.W[l], hd);
        if (l + 1 < L) {
            h = ad::tanh(z);
            hd = ad::mul(ad::one_minus_sq(h), zd);
        } else {
            h = z;
            hd = zd;
        }
    }
    return {h, hd};
}

ParamVector flatten_grad(const Mlp &net, const std::vector<Eigen::MatrixXd> &leaf_grads) {
    ParamVector g(net.spec.param_count());
    Eigen::Index off = 0;
    for (int l = 0; l < net.spec.layers(); ++l) {
        const Eigen::MatrixXd &gW = leaf_grads[static_cast<std::size_t>(2 * l)];
        const Eigen::MatrixXd &gb = leaf_grads[static_cast<std::size_t>(2 * l + 1)];
        for (Eigen::Index i = 0; i < gW.rows(); ++i)
            for (Eigen::Index j = 0; j < gW.cols(); ++j) g(off++) = gW(i, j);
        for (Eigen::Index i = 0; i < gb.rows(); ++i) g(off++) = gb(i, 0);
    }
    return g;
}

MlpVjp mlp_vjp(const Mlp &net, const Eigen::MatrixXd &x, const Eigen::MatrixXd &seed) {
    ad::Tape tape;
    MlpBinding nb = bind(tape, net);
    Var xv = tape.leaf(x);
    Var y = mlp_forward(nb, xv);
    std::vector<Var> wrt = nb.leaves();
    wrt.push_back(xv);
    auto g = tape.grad_values({y}, {seed}, wrt);
    MlpVjp out;
    out.grad_x = g.back();
    g.pop_back();
    out.grad_params = flatten_grad(net, g);
    return out;
}

Var cholesky_head(const Var &raw, double eps) {
    if (raw.rows() != kCholeskyEntries) throw Error(ErrorCode::DimMismatch, "cholesky head expects 6 rows");
    static const auto pos = ad::make_index({0, 3, 4, 6, 7, 8});
    Var L = ad::scatter(raw, pos, 9);
    Var LLt = ad::bmm(L, L, 3, 3, 3, false, true);
    Eigen::MatrixXd eye(9, 1);
    eye << eps, 0, 0, 0, eps, 0, 0, 0, eps;
    return LLt + ad::expand(raw.tape()->leaf(eye), 9, raw.cols());
}

Eigen::Matrix3d cholesky_head(const Eigen::VectorXd &raw, double eps) {
    if (raw.size() != kCholeskyEntries) throw Error(ErrorCode::DimMismatch, "cholesky head expects 6 entries");
    Eigen::Matrix3d L = Eigen::Matrix3d::Zero();
    L(0, 0) = raw(0);
    L(1, 0) = raw(1);
    L(1, 1) = raw(2);
    L(2, 0) = raw(3);
    L(2, 1) = raw(4);
    L(2, 2) = raw(5);
    return L * L.transpose() + eps * Eigen::Matrix3d::Identity();
}

void adam_step(ParamVector &params, const ParamVector &grad, AdamState &st, const AdamConfig &cfg) {
    if (st.m.size() != params.size()) {
        st.m = Eigen::VectorXd::Zero(params.size());
        st.v = Eigen::VectorXd::Zero(params.size());
        st.t = 0;
    }
    st.t += 1;
    st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
    st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    params.array() -= cfg.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + cfg.eps);
}

void sgd_step(ParamVector &params, const ParamVector &grad, double lr) { params -= lr * grad; }

PretrainResult pretrain_mass(Mlp &net, double eps, const Eigen::Matrix3d &target,
                             const std::function<Eigen::MatrixXd(int)> &sampler, int iterations, int batch,
                             const AdamConfig &cfg) {
    if (net.spec.outputs() != kCholeskyEntries)
        throw Error(ErrorCode::DimMismatch, "mass net must have 6 outputs");
    Eigen::LLT<Eigen::Matrix3d> llt(target - eps * Eigen::Matrix3d::Identity());
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::Degenerate, "pretraining target is not reachable");
    const Eigen::Matrix3d L = llt.matrixL();
    Eigen::MatrixXd raw_target(6, 1);
    raw_target << L(0, 0), L(1, 0), L(1, 1), L(2, 0), L(2, 1), L(2, 2);
    Eigen::MatrixXd tgt(9, 1);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) tgt(3 * i + j, 0) = target(i, j);
    AdamState st;
    PretrainResult res;
    for (int it = 0; it <= iterations; ++it) {
        ad::Tape tape;
        MlpBinding nb = bind(tape, net);
        Eigen::MatrixXd x = sampler(batch);
        Var raw = mlp_forward(nb, tape.leaf(x));
        Var M = cholesky_head(raw, eps);
        res.mean_frobenius_error = (M.value() - tgt.replicate(1, x.cols())).colwise().norm().mean();
        res.iterations = it;
        if (it == iterations) break;
        const Eigen::MatrixXd diff = raw.value() - raw_target.replicate(1, x.cols());
        auto g = tape.grad_values({raw}, {2.0 * diff / static_cast<double>(x.cols())}, nb.leaves());
        adam_step(net.params, flatten_grad(net, g), st, cfg);
    }
    return res;
}

} // namespace se3ham
