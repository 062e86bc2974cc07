#include "se3ham/hammodel.hpp"

#include <cmath>

#include "se3ham/errors.hpp"

namespace se3ham {

using ad::Var;

namespace {

std::vector<int> iota_rows(int start, int count) {
    std::vector<int> r(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) r[static_cast<std::size_t>(i)] = start + i;
    return r;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Eigen::MatrixXd col(const Eigen::VectorXd &v) { return Eigen::MatrixXd(v); }

Eigen::Matrix3d block_from_rows(const Eigen::MatrixXd &m9, Eigen::Index c = 0) {
    return rows_to_matrix<double>(m9.col(c));
}

Var outer3(const Var &a) { return ad::bmm(a, a, 3, 1, 3, false, true); }

std::size_t field_outputs(const HamiltonianModel &m, const Field *f) {
    if (f == &m.V) return 1;
    if (f == &m.g) return static_cast<std::size_t>(m.zdim() * m.control_dim);
    return 9;
}

} // namespace

Field Field::constant(Eigen::VectorXd value) {
    Field f;
    f.kind = Kind::Constant;
    f.c = std::move(value);
    return f;
}

Field Field::affine(Eigen::MatrixXd slope, Eigen::VectorXd offset) {
    Field f;
    f.kind = Kind::Affine;
    f.A = std::move(slope);
    f.c = std::move(offset);
    return f;
}

Field Field::learned(Mlp net, std::vector<int> input_rows, bool cholesky) {
    Field f;
    f.kind = Kind::Learned;
    f.net = std::move(net);
    f.input_rows = std::move(input_rows);
    f.cholesky = cholesky;
    return f;
}

Field constant_mass_inverse(const Eigen::Matrix3d &Minv) { return Field::constant(matrix_to_rows<double>(Minv)); }

std::vector<const Field *> HamiltonianModel::learned_fields() const {
    std::vector<const Field *> out;
    for (const Field *f : {&M1_inv, &M2_inv, &V, &g})
        if (f->is_learned() && !(kind == SystemKind::SO3 && f == &M1_inv)) out.push_back(f);
    return out;
}

std::vector<Field *> HamiltonianModel::learned_fields() {
    std::vector<Field *> out;
    for (Field *f : {&M1_inv, &M2_inv, &V, &g})
        if (f->is_learned() && !(kind == SystemKind::SO3 && f == &M1_inv)) out.push_back(f);
    return out;
}

Eigen::Index HamiltonianModel::param_count() const {
    Eigen::Index n = 0;
    for (const Field *f : learned_fields()) n += f->net.params.size();
    return n;
}

ParamVector HamiltonianModel::params() const {
    ParamVector p(param_count());
    Eigen::Index off = 0;
    for (const Field *f : learned_fields()) {
        p.segment(off, f->net.params.size()) = f->net.params;
        off += f->net.params.size();
    }
    return p;
}

void HamiltonianModel::set_params(const ParamVector &p) {
    if (p.size() != param_count()) throw Error(ErrorCode::DimMismatch, "parameter vector size");
    Eigen::Index off = 0;
    for (Field *f : learned_fields()) {
        f->net.params = p.segment(off, f->net.params.size());
        off += f->net.params.size();
    }
}

void HamiltonianModel::validate() const {
    std::vector<const Field *> fields{&M2_inv, &V, &g};
    if (kind == SystemKind::SE3) fields.insert(fields.begin(), &M1_inv);
    for (const Field *f : fields) {
        const auto n_out = static_cast<Eigen::Index>(field_outputs(*this, f));
        switch (f->kind) {
        case Field::Kind::Constant:
            if (f->c.size() != n_out) throw Error(ErrorCode::DimMismatch, "constant field size");
            break;
        case Field::Kind::Affine:
            if (f->A.rows() != n_out || f->A.cols() != qdim() || f->c.size() != n_out)
                throw Error(ErrorCode::DimMismatch, "affine field size");
            break;
        case Field::Kind::Learned: {
            const Eigen::Index want = f->cholesky ? kCholeskyEntries : n_out;
            if (f->net.spec.outputs() != want) throw Error(ErrorCode::DimMismatch, "network output size");
            if (static_cast<int>(f->input_rows.size()) != f->net.spec.inputs())
                throw Error(ErrorCode::DimMismatch, "network input size");
            for (int r : f->input_rows)
                if (r < 0 || r >= qdim()) throw Error(ErrorCode::DimMismatch, "network input row");
            if (f->net.params.size() != f->net.spec.param_count())
                throw Error(ErrorCode::DimMismatch, "network parameter count");
            if (f->output_scale.size() != 0 && (f->cholesky || f->output_scale.size() != n_out))
                throw Error(ErrorCode::DimMismatch, "output scale size");
            break;
        }
        }
    }
}

void set_control_scale(HamiltonianModel &model, const Eigen::VectorXd &scale) {
    if (!model.g.is_learned()) return;
    const int m = model.control_dim, zd = model.zdim();
    if (scale.size() != m) throw Error(ErrorCode::DimMismatch, "control scale size");
    model.g.output_scale.resize(zd * m);
    for (int i = 0; i < zd; ++i)
        for (int j = 0; j < m; ++j) {
            if (!(scale(j) > 0.0)) throw Error(ErrorCode::DimMismatch, "control scale must be positive");
            model.g.output_scale(i * m + j) = 1.0 / scale(j);
        }
}

HamiltonianModel make_learned_model(SystemKind kind, int control_dim, const NetWidths &widths, std::uint64_t seed,
                                    double epsilon) {
    auto spec = [](int in, const std::vector<int> &hidden, int out) {
        MlpSpec s;
        s.widths.push_back(in);
        s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
        s.widths.push_back(out);
        return s;
    };
    auto net = [&](MlpSpec s, std::uint64_t k) {
        Mlp m(std::move(s));
        m.init_uniform(splitmix(seed * 8 + k));
        return m;
    };
    HamiltonianModel m;
    m.kind = kind;
    m.control_dim = control_dim;
    m.epsilon = epsilon;
    const int qd = q_dim(kind), zd = zeta_dim(kind);
    if (kind == SystemKind::SE3) {
        m.M1_inv = Field::learned(net(spec(3, widths.mass, 6), 1), iota_rows(0, 3), true);
        m.M2_inv = Field::learned(net(spec(9, widths.mass, 6), 2), iota_rows(3, 9), true);
    } else {
        m.M1_inv = constant_mass_inverse(Eigen::Matrix3d::Identity());
        m.M2_inv = Field::learned(net(spec(9, widths.mass, 6), 2), iota_rows(0, 9), true);
    }
    m.V = Field::learned(net(spec(qd, widths.potential, 1), 3), iota_rows(0, qd), false);
    m.g = Field::learned(net(spec(qd, widths.input, zd * control_dim), 4), iota_rows(0, qd), false);
    m.validate();
    return m;
}

Eigen::VectorXd FullState::flat() const {
    Eigen::VectorXd x(q.size() + zeta.size());
    x << q, zeta;
    return x;
}

FullState FullState::from_flat(const Eigen::VectorXd &x, SystemKind kind) {
    const int qd = q_dim(kind), zd = zeta_dim(kind);
    if (x.size() != qd + zd) throw Error(ErrorCode::DimMismatch, "flat state size");
    return {x.head(qd), x.tail(zd)};
}

// ---------------------------------------------------------------------------

BoundModel::BoundModel(const HamiltonianModel &model, ad::Tape &tape) : model_(&model), tape_(&tape) {
    if (model.kind == SystemKind::SE3) m1_ = bind_field(model.M1_inv);
    m2_ = bind_field(model.M2_inv);
    v_ = bind_field(model.V);
    g_ = bind_field(model.g);
}

BoundModel::Bound BoundModel::bind_field(const Field &f) {
    Bound b;
    b.field = &f;
    switch (f.kind) {
    case Field::Kind::Constant:
        b.c = tape_->leaf(col(f.c));
        break;
    case Field::Kind::Affine:
        b.c = tape_->leaf(col(f.c));
        b.A = tape_->leaf(f.A);
        break;
    case Field::Kind::Learned:
        b.net = bind(*tape_, f.net);
        if (f.output_scale.size() > 0) b.scale = tape_->leaf(col(f.output_scale));
        if (static_cast<int>(f.input_rows.size()) != model_->qdim() ||
            f.input_rows != iota_rows(0, model_->qdim()))
            b.rows = ad::make_index(f.input_rows);
        break;
    }
    return b;
}

Var BoundModel::eval(const Bound &b, const Var &q) const {
    const Field &f = *b.field;
    switch (f.kind) {
    case Field::Kind::Constant:
        return ad::expand(b.c, f.c.size(), q.cols());
    case Field::Kind::Affine:
        return ad::matmul(b.A, q) + ad::expand(b.c, f.c.size(), q.cols());
    case Field::Kind::Learned: {
        Var x = b.rows ? ad::gather(q, b.rows) : q;
        Var y = mlp_forward(b.net, x);
        if (f.cholesky) return cholesky_head(y, model_->epsilon);
        if (b.scale.valid()) y = ad::mul(y, ad::expand(b.scale, y.rows(), y.cols()));
        return y;
    }
    }
    return {};
}

Tangent BoundModel::eval_mass_tangent(const Bound &b, const Var &q, const Var &qdot) const {
    const Field &f = *b.field;
    if (!f.is_learned()) {
        Var M = eval(b, q);
        return {M, tape_->leaf(Eigen::MatrixXd::Zero(9, q.cols()))};
    }
    Var x = b.rows ? ad::gather(q, b.rows) : q;
    Var xd = b.rows ? ad::gather(qdot, b.rows) : qdot;
    Tangent raw = mlp_forward_tangent(b.net, x, xd);
    if (!f.cholesky) return raw;
    static const auto pos = ad::make_index({0, 3, 4, 6, 7, 8});
    Var L = ad::scatter(raw.value, pos, 9);
    Var Ld = ad::scatter(raw.dot, pos, 9);
    Eigen::MatrixXd eye(9, 1);
    eye << 1, 0, 0, 0, 1, 0, 0, 0, 1;
    Var M = ad::bmm(L, L, 3, 3, 3, false, true) +
            ad::expand(tape_->leaf(model_->epsilon * eye), 9, q.cols());
    Var Md = ad::bmm(Ld, L, 3, 3, 3, false, true) + ad::bmm(L, Ld, 3, 3, 3, false, true);
    return {M, Md};
}

const BoundModel::Bound &BoundModel::mass_block(int block) const {
    if (block == 0) {
        if (model_->kind != SystemKind::SE3) throw Error(ErrorCode::DimMismatch, "no translational block on SO(3)");
        return m1_;
    }
    return m2_;
}

Var BoundModel::mass_inverse(int block, const Var &q) const { return eval(mass_block(block), q); }

Tangent BoundModel::mass_inverse_tangent(int block, const Var &q, const Var &qdot) const {
    return eval_mass_tangent(mass_block(block), q, qdot);
}

Var BoundModel::potential(const Var &q) const { return eval(v_, q); }

Var BoundModel::input_matrix(const Var &q) const { return eval(g_, q); }

Var BoundModel::dH_dq(const Var &q, const Var &p) const {
    const Eigen::Index B = q.cols();
    std::vector<Var> outs, seeds;
    if (model_->kind == SystemKind::SE3) {
        outs.push_back(mass_inverse(0, q));
        seeds.push_back(0.5 * outer3(ad::rows(p, 0, 3)));
        outs.push_back(mass_inverse(1, q));
        seeds.push_back(0.5 * outer3(ad::rows(p, 3, 3)));
    } else {
        outs.push_back(mass_inverse(1, q));
        seeds.push_back(0.5 * outer3(p));
    }
    outs.push_back(potential(q));
    seeds.push_back(tape_->leaf(Eigen::MatrixXd::Ones(1, B)));
    return tape_->grad(outs, seeds, {q})[0];
}

void check_mass_condition(const Eigen::MatrixXd &Minv9) {
    for (Eigen::Index c = 0; c < Minv9.cols(); ++c) {
        const Eigen::Matrix3d M = block_from_rows(Minv9, c);
        if (!M.allFinite()) throw Error(ErrorCode::NonFinite, "mass matrix is not finite");
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(2);
        if (lo <= 0.0 || hi > 1e8 * lo) throw Error(ErrorCode::SingularMass, "mass matrix is ill-conditioned");
    }
}

RhsVars BoundModel::rhs(const Var &q, const Var &zeta, const Var &u) const {
    const HamiltonianModel &m = *model_;
    const int qd = m.qdim(), zd = m.zdim(), md = m.control_dim;
    if (q.rows() != qd || zeta.rows() != zd || u.rows() != md)
        throw Error(ErrorCode::DimMismatch, "rhs input sizes");
    if (q.cols() != zeta.cols() || q.cols() != u.cols()) throw Error(ErrorCode::DimMismatch, "rhs batch sizes");
    const Eigen::Index B = q.cols();

    if (m.kind == SystemKind::SE3) {
        Var v = ad::rows(zeta, 0, 3), w = ad::rows(zeta, 3, 3);
        Var R9 = ad::rows(q, 3, 9);
        std::array<Var, 3> r{ad::rows(q, 3, 3), ad::rows(q, 6, 3), ad::rows(q, 9, 3)};
        Var qdot = ad::concat({ad::bmm(R9, v, 3, 3, 1), ad::cross3(r[0], w), ad::cross3(r[1], w),
                               ad::cross3(r[2], w)});
        Tangent M1 = eval_mass_tangent(m1_, q, qdot);
        Tangent M2 = eval_mass_tangent(m2_, q, qdot);
        check_mass_condition(M1.value.value());
        check_mass_condition(M2.value.value());
        Var pv = ad::solve3(M1.value, v), pw = ad::solve3(M2.value, w);
        Var V = potential(q);
        Var dHdq = tape_->grad({M1.value, M2.value, V},
                               {0.5 * outer3(pv), 0.5 * outer3(pw), tape_->leaf(Eigen::MatrixXd::Ones(1, B))},
                               {q})[0];
        Var gu = ad::bmm(input_matrix(q), u, zd, md, 1);
        Var pv_dot = ad::cross3(pv, w) - ad::bmm(R9, ad::rows(dHdq, 0, 3), 3, 3, 1, true) + ad::rows(gu, 0, 3);
        Var pw_dot = ad::cross3(pw, w) + ad::cross3(pv, v) + ad::rows(gu, 3, 3);
        for (int i = 0; i < 3; ++i) pw_dot = pw_dot + ad::cross3(r[i], ad::rows(dHdq, 3 + 3 * i, 3));
        Var v_dot = ad::bmm(M1.dot, pv, 3, 3, 1) + ad::bmm(M1.value, pv_dot, 3, 3, 1);
        Var w_dot = ad::bmm(M2.dot, pw, 3, 3, 1) + ad::bmm(M2.value, pw_dot, 3, 3, 1);
        return {qdot, ad::concat({v_dot, w_dot})};
    }

    std::array<Var, 3> r{ad::rows(q, 0, 3), ad::rows(q, 3, 3), ad::rows(q, 6, 3)};
    Var w = zeta;
    Var qdot = ad::concat({ad::cross3(r[0], w), ad::cross3(r[1], w), ad::cross3(r[2], w)});
    Tangent M2 = eval_mass_tangent(m2_, q, qdot);
    check_mass_condition(M2.value.value());
    Var pw = ad::solve3(M2.value, w);
    Var V = potential(q);
    Var dHdq =
        tape_->grad({M2.value, V}, {0.5 * outer3(pw), tape_->leaf(Eigen::MatrixXd::Ones(1, B))}, {q})[0];
    Var pw_dot = ad::cross3(pw, w) + ad::bmm(input_matrix(q), u, zd, md, 1);
    for (int i = 0; i < 3; ++i) pw_dot = pw_dot + ad::cross3(r[i], ad::rows(dHdq, 3 * i, 3));
    Var w_dot = ad::bmm(M2.dot, pw, 3, 3, 1) + ad::bmm(M2.value, pw_dot, 3, 3, 1);
    return {qdot, w_dot};
}

std::vector<Var> BoundModel::param_leaves() const {
    std::vector<Var> out;
    for (const Bound *b : {&m1_, &m2_, &v_, &g_}) {
        if (!b->field || !b->field->is_learned()) continue;
        if (b == &m1_ && model_->kind != SystemKind::SE3) continue;
        for (const Var &l : b->net.leaves()) out.push_back(l);
    }
    return out;
}

ParamVector BoundModel::flatten_grad(const std::vector<Eigen::MatrixXd> &grads) const {
    ParamVector g(model_->param_count());
    Eigen::Index off = 0;
    std::size_t k = 0;
    for (const Field *f : model_->learned_fields()) {
        const std::size_t nl = static_cast<std::size_t>(2 * f->net.spec.layers());
        std::vector<Eigen::MatrixXd> part(grads.begin() + static_cast<std::ptrdiff_t>(k),
                                          grads.begin() + static_cast<std::ptrdiff_t>(k + nl));
        const ParamVector pg = se3ham::flatten_grad(f->net, part);
        g.segment(off, pg.size()) = pg;
        off += pg.size();
        k += nl;
    }
    return g;
}

// ---------------------------------------------------------------------------

namespace {

void check_q(const HamiltonianModel &m, const Eigen::VectorXd &q) {
    if (q.size() != m.qdim()) throw Error(ErrorCode::DimMismatch, "coordinate vector size");
}

void check_z(const HamiltonianModel &m, const Eigen::VectorXd &z) {
    if (z.size() != m.zdim()) throw Error(ErrorCode::DimMismatch, "velocity/momentum vector size");
}

} // namespace

MassInverse mass_inverse(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    check_q(model, q);
    ad::Tape tape;
    BoundModel bm(model, tape);
    Var qv = tape.leaf(col(q));
    MassInverse out;
    if (model.kind == SystemKind::SE3) out.M1_inv = block_from_rows(bm.mass_inverse(0, qv).value());
    out.M2_inv = block_from_rows(bm.mass_inverse(1, qv).value());
    return out;
}

double potential(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    check_q(model, q);
    ad::Tape tape;
    BoundModel bm(model, tape);
    return bm.potential(tape.leaf(col(q))).value()(0, 0);
}

Eigen::MatrixXd input_matrix(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    check_q(model, q);
    ad::Tape tape;
    BoundModel bm(model, tape);
    const Eigen::MatrixXd g = bm.input_matrix(tape.leaf(col(q))).value();
    Eigen::MatrixXd G(model.zdim(), model.control_dim);
    for (int i = 0; i < model.zdim(); ++i)
        for (int j = 0; j < model.control_dim; ++j) G(i, j) = g(i * model.control_dim + j, 0);
    return G;
}

Eigen::VectorXd dV_dq(const HamiltonianModel &model, const Eigen::VectorXd &q) {
    check_q(model, q);
    ad::Tape tape;
    BoundModel bm(model, tape);
    Var qv = tape.leaf(col(q));
    return tape.grad_values(bm.potential(qv), {qv})[0].col(0);
}

Eigen::VectorXd momentum(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta) {
    check_z(model, zeta);
    const MassInverse M = mass_inverse(model, q);
    if (model.kind == SystemKind::SE3) {
        Eigen::VectorXd p(6);
        p << M.M1_inv.llt().solve(zeta.head<3>()), M.M2_inv.llt().solve(zeta.tail<3>());
        return p;
    }
    return M.M2_inv.llt().solve(zeta);
}

Eigen::VectorXd dH_dp(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &p) {
    check_z(model, p);
    const MassInverse M = mass_inverse(model, q);
    if (model.kind == SystemKind::SE3) {
        Eigen::VectorXd out(6);
        out << M.M1_inv * p.head<3>(), M.M2_inv * p.tail<3>();
        return out;
    }
    return M.M2_inv * p;
}

double hamiltonian(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &p) {
    return 0.5 * p.dot(dH_dp(model, q, p)) + potential(model, q);
}

Eigen::VectorXd dH_dq(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &p) {
    check_q(model, q);
    check_z(model, p);
    ad::Tape tape;
    BoundModel bm(model, tape);
    return bm.dH_dq(tape.leaf(col(q)), tape.leaf(col(p))).value().col(0);
}

MassInverse time_deriv_mass_inverse(const HamiltonianModel &model, const Eigen::VectorXd &q,
                                    const Eigen::VectorXd &qdot) {
    check_q(model, q);
    check_q(model, qdot);
    ad::Tape tape;
    BoundModel bm(model, tape);
    Var qv = tape.leaf(col(q)), qd = tape.leaf(col(qdot));
    MassInverse out;
    if (model.kind == SystemKind::SE3) out.M1_inv = block_from_rows(bm.mass_inverse_tangent(0, qv, qd).dot.value());
    out.M2_inv = block_from_rows(bm.mass_inverse_tangent(1, qv, qd).dot.value());
    return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> rhs_batch(const HamiltonianModel &model, const Eigen::MatrixXd &q,
                                                      const Eigen::MatrixXd &zeta, const Eigen::MatrixXd &u) {
    ad::Tape tape;
    BoundModel bm(model, tape);
    RhsVars r = bm.rhs(tape.leaf(q), tape.leaf(zeta), tape.leaf(u));
    return {r.qdot.value(), r.zdot.value()};
}

StateDerivative rhs(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                    const Eigen::VectorXd &u) {
    check_q(model, q);
    check_z(model, zeta);
    if (u.size() != model.control_dim) throw Error(ErrorCode::DimMismatch, "control size");
    auto [qd, zd] = rhs_batch(model, col(q), col(zeta), col(u));
    return {qd.col(0), zd.col(0)};
}

StateDerivative rhs_se3(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                        const Eigen::VectorXd &u) {
    if (model.kind != SystemKind::SE3) throw Error(ErrorCode::DimMismatch, "model is not an SE(3) model");
    return rhs(model, q, zeta, u);
}

StateDerivative rhs_so3(const HamiltonianModel &model, const Eigen::VectorXd &q, const Eigen::VectorXd &zeta,
                        const Eigen::VectorXd &u) {
    if (model.kind != SystemKind::SO3) throw Error(ErrorCode::DimMismatch, "model is not an SO(3) model");
    return rhs(model, q, zeta, u);
}

} // namespace se3ham
