#include "se3ham/ad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "se3ham/errors.hpp"

namespace se3ham::ad {

namespace {

void require(bool ok, const char *what) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

void same_shape(const Matrix &x, const Matrix &y, const char *op) {
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(op) + ": " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + " vs " +
                        std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
}

Tape *tape_of(const Var &x) {
    if (!x.valid()) throw Error(ErrorCode::ShapeMismatch, "operation on an unbound variable");
    return x.tape();
}

Tape *tape_of(const Var &x, const Var &y) {
    Tape *t = tape_of(x);
    if (tape_of(y) != t) throw Error(ErrorCode::ShapeMismatch, "variables live on different tapes");
    return t;
}

Node unary(Op op, const Var &x, Matrix v) {
    Node n;
    n.op = op;
    n.a = x.id();
    n.value = std::move(v);
    return n;
}

Node binary(Op op, const Var &x, const Var &y, Matrix v) {
    Node n;
    n.op = op;
    n.a = x.id();
    n.b = y.id();
    n.value = std::move(v);
    return n;
}

} // namespace

const Matrix &Var::value() const { return tape_->value(id_); }

Var Tape::leaf(Matrix v) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(v);
    return push(std::move(n));
}

Var Tape::push(Node &&n) {
    if (nodes_.size() >= max_nodes_)
        throw Error(ErrorCode::TapeOverflow, "tape exceeded " + std::to_string(max_nodes_) + " nodes");
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

// ---------------------------------------------------------------------------
// numeric kernels

Matrix add(const Matrix &x, const Matrix &y) {
    same_shape(x, y, "add");
    return x + y;
}

Matrix sub(const Matrix &x, const Matrix &y) {
    same_shape(x, y, "sub");
    return x - y;
}

Matrix mul(const Matrix &x, const Matrix &y) {
    same_shape(x, y, "mul");
    return x.cwiseProduct(y);
}

Matrix neg(const Matrix &x) { return -x; }

Matrix scale(const Matrix &x, double s) { return s * x; }

Matrix tanh(const Matrix &x) { return x.array().tanh().matrix(); }

Matrix one_minus_sq(const Matrix &x) { return (1.0 - x.array().square()).matrix(); }

Matrix matmul(const Matrix &x, const Matrix &y, bool ta, bool tb) {
    const auto inner_x = ta ? x.rows() : x.cols();
    const auto inner_y = tb ? y.cols() : y.rows();
    require(inner_x == inner_y, "matmul: inner dimensions differ");
    Matrix out;
    if (!ta && !tb)
        out.noalias() = x * y;
    else if (ta && !tb)
        out.noalias() = x.transpose() * y;
    else if (!ta && tb)
        out.noalias() = x * y.transpose();
    else
        out.noalias() = x.transpose() * y.transpose();
    return out;
}

Matrix expand(const Matrix &x, Eigen::Index rows, Eigen::Index cols) {
    if (x.rows() == rows && x.cols() == cols) return x;
    if (x.rows() == 1 && x.cols() == 1) return Matrix::Constant(rows, cols, x(0, 0));
    if (x.rows() == 1 && x.cols() == cols) return x.replicate(rows, 1);
    if (x.cols() == 1 && x.rows() == rows) return x.replicate(1, cols);
    throw Error(ErrorCode::ShapeMismatch, "expand: incompatible shapes");
}

Matrix reduce_to(const Matrix &x, Eigen::Index rows, Eigen::Index cols) {
    if (x.rows() == rows && x.cols() == cols) return x;
    if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, x.sum());
    if (rows == 1 && cols == x.cols()) return x.colwise().sum();
    if (cols == 1 && rows == x.rows()) return x.rowwise().sum();
    throw Error(ErrorCode::ShapeMismatch, "reduce_to: incompatible shapes");
}

Matrix gather(const Matrix &x, const std::shared_ptr<const Index> &idx) {
    const Index &ix = *idx;
    Matrix out(static_cast<Eigen::Index>(ix.size()), x.cols());
    for (std::size_t i = 0; i < ix.size(); ++i) {
        require(ix[i] >= 0 && ix[i] < x.rows(), "gather: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = x.row(ix[i]);
    }
    return out;
}

Matrix scatter(const Matrix &x, const std::shared_ptr<const Index> &idx, Eigen::Index rows) {
    const Index &ix = *idx;
    require(static_cast<Eigen::Index>(ix.size()) == x.rows(), "scatter: index size");
    Matrix out = Matrix::Zero(rows, x.cols());
    for (std::size_t i = 0; i < ix.size(); ++i) {
        require(ix[i] >= 0 && ix[i] < rows, "scatter: index out of range");
        out.row(ix[i]) += x.row(static_cast<Eigen::Index>(i));
    }
    return out;
}

Matrix concat(const std::vector<Matrix> &xs) {
    require(!xs.empty(), "concat: no inputs");
    Eigen::Index r = 0;
    for (const auto &x : xs) {
        require(x.cols() == xs.front().cols(), "concat: column counts differ");
        r += x.rows();
    }
    Matrix out(r, xs.front().cols());
    Eigen::Index off = 0;
    for (const auto &x : xs) {
        out.middleRows(off, x.rows()) = x;
        off += x.rows();
    }
    return out;
}

Matrix bmm(const Matrix &A, const Matrix &B, int n, int k, int m, bool ta, bool tb) {
    require(A.rows() == n * k && B.rows() == k * m, "bmm: block sizes");
    require(A.cols() == B.cols(), "bmm: batch sizes");
    const Eigen::Index batch = A.cols();
    Matrix C(n * m, batch);
    const int sa_i = ta ? 1 : k, sa_l = ta ? n : 1;
    const int sb_l = tb ? 1 : m, sb_j = tb ? k : 1;
    for (Eigen::Index c = 0; c < batch; ++c) {
        const double *a = A.col(c).data();
        const double *b = B.col(c).data();
        double *o = C.col(c).data();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                double acc = 0.0;
                for (int l = 0; l < k; ++l) acc += a[i * sa_i + l * sa_l] * b[l * sb_l + j * sb_j];
                o[i * m + j] = acc;
            }
    }
    return C;
}

Matrix solve3(const Matrix &A, const Matrix &b, bool ta) {
    require(A.rows() == 9 && b.rows() == 3 && A.cols() == b.cols(), "solve3: shapes");
    Matrix x(3, b.cols());
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
        Eigen::Matrix3d M = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(A.col(c).data());
        if (ta) M.transposeInPlace();
        x.col(c) = M.inverse() * b.col(c);
    }
    return x;
}

Matrix cross3(const Matrix &x, const Matrix &y) {
    same_shape(x, y, "cross3");
    require(x.rows() == 3, "cross3: needs 3 rows");
    Matrix out(3, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        out(0, c) = x(1, c) * y(2, c) - x(2, c) * y(1, c);
        out(1, c) = x(2, c) * y(0, c) - x(0, c) * y(2, c);
        out(2, c) = x(0, c) * y(1, c) - x(1, c) * y(0, c);
    }
    return out;
}

Matrix angle_sq(const Matrix &c) {
    return c.unaryExpr([](double v) {
        const double th = std::acos(std::clamp(v, -1.0, 1.0));
        return th * th;
    });
}

Matrix angle_sq_grad(const Matrix &c) {
    return c.unaryExpr([](double v) {
        const double th = std::acos(std::clamp(v, -1.0, 1.0));
        if (th < 1e-4) return -2.0 * (1.0 + th * th / 6.0);
        return -2.0 * th / std::max(std::sin(th), 1e-12);
    });
}

// ---------------------------------------------------------------------------
// recorded operations

Var add(const Var &x, const Var &y) {
    Tape *t = tape_of(x, y);
    return t->push(binary(Op::Add, x, y, add(x.value(), y.value())));
}

Var sub(const Var &x, const Var &y) {
    Tape *t = tape_of(x, y);
    return t->push(binary(Op::Sub, x, y, sub(x.value(), y.value())));
}

Var mul(const Var &x, const Var &y) {
    Tape *t = tape_of(x, y);
    return t->push(binary(Op::Mul, x, y, mul(x.value(), y.value())));
}

Var neg(const Var &x) { return tape_of(x)->push(unary(Op::Neg, x, -x.value())); }

Var scale(const Var &x, double s) {
    Node n = unary(Op::Scale, x, s * x.value());
    n.s = s;
    return tape_of(x)->push(std::move(n));
}

Var tanh(const Var &x) { return tape_of(x)->push(unary(Op::Tanh, x, tanh(x.value()))); }

Var one_minus_sq(const Var &x) { return tape_of(x)->push(unary(Op::OneMinusSq, x, one_minus_sq(x.value()))); }

Var matmul(const Var &x, const Var &y, bool ta, bool tb) {
    Tape *t = tape_of(x, y);
    Node n = binary(Op::MatMul, x, y, matmul(x.value(), y.value(), ta, tb));
    n.ta = ta;
    n.tb = tb;
    return t->push(std::move(n));
}

Var expand(const Var &x, Eigen::Index rows, Eigen::Index cols) {
    if (x.rows() == rows && x.cols() == cols) return x;
    return tape_of(x)->push(unary(Op::Expand, x, expand(x.value(), rows, cols)));
}

Var reduce_to(const Var &x, Eigen::Index rows, Eigen::Index cols) {
    if (x.rows() == rows && x.cols() == cols) return x;
    return tape_of(x)->push(unary(Op::ReduceTo, x, reduce_to(x.value(), rows, cols)));
}

Var gather(const Var &x, const std::shared_ptr<const Index> &idx) {
    Node n = unary(Op::Gather, x, gather(x.value(), idx));
    n.index = idx;
    return tape_of(x)->push(std::move(n));
}

Var scatter(const Var &x, const std::shared_ptr<const Index> &idx, Eigen::Index rows) {
    Node n = unary(Op::Scatter, x, scatter(x.value(), idx, rows));
    n.index = idx;
    n.d0 = static_cast<int>(rows);
    return tape_of(x)->push(std::move(n));
}

Var concat(const std::vector<Var> &xs) {
    require(!xs.empty(), "concat: no inputs");
    if (xs.size() == 1) return xs.front();
    Tape *t = tape_of(xs.front());
    std::vector<Matrix> vals;
    vals.reserve(xs.size());
    Node n;
    n.op = Op::Concat;
    for (const auto &x : xs) {
        if (tape_of(x) != t) throw Error(ErrorCode::ShapeMismatch, "variables live on different tapes");
        vals.push_back(x.value());
        n.extra.push_back(x.id());
    }
    n.value = concat(vals);
    return t->push(std::move(n));
}

Var bmm(const Var &A, const Var &B, int n, int k, int m, bool ta, bool tb) {
    Tape *t = tape_of(A, B);
    Node nd = binary(Op::BatchMatMul, A, B, bmm(A.value(), B.value(), n, k, m, ta, tb));
    nd.d0 = n;
    nd.d1 = k;
    nd.d2 = m;
    nd.ta = ta;
    nd.tb = tb;
    return t->push(std::move(nd));
}

Var solve3(const Var &A, const Var &b, bool ta) {
    Tape *t = tape_of(A, b);
    Node n = binary(Op::Solve3, A, b, solve3(A.value(), b.value(), ta));
    n.ta = ta;
    return t->push(std::move(n));
}

Var cross3(const Var &x, const Var &y) {
    Tape *t = tape_of(x, y);
    return t->push(binary(Op::Cross3, x, y, cross3(x.value(), y.value())));
}

Var angle_sq(const Var &c) { return tape_of(c)->push(unary(Op::AngleSq, c, angle_sq(c.value()))); }

Var angle_sq_grad(const Var &c) {
    return tape_of(c)->push(unary(Op::AngleSqGrad, c, angle_sq_grad(c.value())));
}

Var rows(const Var &x, int start, int count) {
    if (start == 0 && count == x.rows()) return x;
    return gather(x, range_index(start, count));
}

Var sum_all(const Var &x) { return reduce_to(x, 1, 1); }

Var constant_like(Tape &t, const Matrix &m) { return t.leaf(m); }

std::shared_ptr<const Index> make_index(Index idx) { return std::make_shared<const Index>(std::move(idx)); }

std::shared_ptr<const Index> range_index(int start, int count) {
    Index ix(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) ix[static_cast<std::size_t>(i)] = start + i;
    return make_index(std::move(ix));
}

// ---------------------------------------------------------------------------
// reverse sweep

namespace {

struct VarSource {
    Tape *t;
    Var in(int id) const { return Var(t, id); }
};

struct NumSource {
    const Tape *t;
    const Matrix &in(int id) const { return t->value(id); }
};

void accumulate(std::optional<Matrix> &slot, Matrix &&c) {
    if (!slot)
        slot = std::move(c);
    else
        *slot += c;
}

void accumulate(std::optional<Var> &slot, Var &&c) {
    if (!slot)
        slot = std::move(c);
    else
        slot = add(*slot, c);
}

template <typename T, typename Source>
void sweep(const Tape &tape, const Source &src, std::vector<std::optional<T>> &adj, int lo, int hi,
           const std::vector<char> &keep) {
    auto acc = [&](int id, T &&c) {
        if (id < lo) return;
        accumulate(adj[static_cast<std::size_t>(id - lo)], std::move(c));
    };
    for (int id = hi; id >= lo; --id) {
        auto &slot = adj[static_cast<std::size_t>(id - lo)];
        if (!slot) continue;
        const Node &nd = tape.node(id);
        if (nd.op == Op::Leaf) continue;
        // Copy what is needed; recording may append to the tape.
        const Op op = nd.op;
        const int a = nd.a, b = nd.b;
        const double s = nd.s;
        const int d0 = nd.d0, d1 = nd.d1, d2 = nd.d2;
        const bool ta = nd.ta, tb = nd.tb;
        const auto index = nd.index;
        const std::vector<int> extra = nd.extra;
        const T g = *slot;
        if (!keep[static_cast<std::size_t>(id - lo)]) slot.reset();

        switch (op) {
        case Op::Leaf:
            break;
        case Op::Add:
            acc(a, T(g));
            acc(b, T(g));
            break;
        case Op::Sub:
            acc(a, T(g));
            acc(b, neg(g));
            break;
        case Op::Mul:
            if (a >= lo) acc(a, mul(g, src.in(b)));
            if (b >= lo) acc(b, mul(g, src.in(a)));
            break;
        case Op::Neg:
            acc(a, neg(g));
            break;
        case Op::Scale:
            acc(a, scale(g, s));
            break;
        case Op::Tanh:
            acc(a, mul(g, one_minus_sq(src.in(id))));
            break;
        case Op::OneMinusSq:
            acc(a, mul(g, scale(src.in(a), -2.0)));
            break;
        case Op::MatMul:
            if (a >= lo) {
                if (!ta)
                    acc(a, matmul(g, src.in(b), false, !tb));
                else
                    acc(a, matmul(src.in(b), g, tb, true));
            }
            if (b >= lo) {
                if (!tb)
                    acc(b, matmul(src.in(a), g, !ta, false));
                else
                    acc(b, matmul(g, src.in(a), true, ta));
            }
            break;
        case Op::Expand: {
            const auto &x = src.in(a);
            acc(a, reduce_to(g, x.rows(), x.cols()));
            break;
        }
        case Op::ReduceTo: {
            const auto &x = src.in(a);
            acc(a, expand(g, x.rows(), x.cols()));
            break;
        }
        case Op::Gather:
            acc(a, scatter(g, index, src.in(a).rows()));
            break;
        case Op::Scatter:
            acc(a, gather(g, index));
            break;
        case Op::Concat: {
            int off = 0;
            for (int e : extra) {
                const int r = static_cast<int>(src.in(e).rows());
                if (e >= lo) acc(e, gather(g, range_index(off, r)));
                off += r;
            }
            break;
        }
        case Op::BatchMatMul: {
            const int n = d0, k = d1, m = d2;
            if (a >= lo) {
                if (!ta)
                    acc(a, bmm(g, src.in(b), n, m, k, false, !tb));
                else
                    acc(a, bmm(src.in(b), g, k, m, n, tb, true));
            }
            if (b >= lo) {
                if (!tb)
                    acc(b, bmm(src.in(a), g, k, n, m, !ta, false));
                else
                    acc(b, bmm(g, src.in(a), m, n, k, true, ta));
            }
            break;
        }
        case Op::Solve3: {
            T gb = solve3(src.in(a), g, !ta);
            if (a >= lo) {
                const auto &x = src.in(id);
                if (!ta)
                    acc(a, neg(bmm(gb, x, 3, 1, 3, false, true)));
                else
                    acc(a, neg(bmm(x, gb, 3, 1, 3, false, true)));
            }
            acc(b, std::move(gb));
            break;
        }
        case Op::Cross3:
            if (a >= lo) acc(a, cross3(src.in(b), g));
            if (b >= lo) acc(b, cross3(g, src.in(a)));
            break;
        case Op::AngleSq:
            acc(a, mul(g, angle_sq_grad(src.in(a))));
            break;
        case Op::AngleSqGrad:
            throw Error(ErrorCode::ShapeMismatch, "second derivative of angle_sq is not supported");
        }
    }
}

template <typename T> void check_seed_shape(const Matrix &out, const T &seed_value) {
    if (out.rows() != seed_value.rows() || out.cols() != seed_value.cols())
        throw Error(ErrorCode::ShapeMismatch, "seed shape differs from output shape");
}

} // namespace

std::vector<Var> Tape::grad(const std::vector<Var> &outputs, const std::vector<Var> &seeds,
                            const std::vector<Var> &wrt) {
    require(outputs.size() == seeds.size(), "grad: one seed per output");
    std::vector<Var> result;
    if (wrt.empty()) return result;
    int lo = wrt.front().id(), hi = -1;
    for (const auto &w : wrt) lo = std::min(lo, w.id());
    for (const auto &o : outputs) hi = std::max(hi, o.id());
    std::vector<std::optional<Var>> adj;
    std::vector<char> keep;
    if (hi >= lo) {
        adj.resize(static_cast<std::size_t>(hi - lo + 1));
        keep.assign(adj.size(), 0);
        for (const auto &w : wrt)
            if (w.id() <= hi) keep[static_cast<std::size_t>(w.id() - lo)] = 1;
        for (std::size_t k = 0; k < outputs.size(); ++k) {
            check_seed_shape(outputs[k].value(), seeds[k].value());
            if (outputs[k].id() >= lo)
                accumulate(adj[static_cast<std::size_t>(outputs[k].id() - lo)], Var(seeds[k]));
        }
        sweep<Var>(*this, VarSource{this}, adj, lo, hi, keep);
    }
    for (const auto &w : wrt) {
        if (w.id() <= hi && adj[static_cast<std::size_t>(w.id() - lo)])
            result.push_back(*adj[static_cast<std::size_t>(w.id() - lo)]);
        else
            result.push_back(leaf(Matrix::Zero(w.rows(), w.cols())));
    }
    return result;
}

std::vector<Var> Tape::grad(Var scalar, const std::vector<Var> &wrt) {
    require(scalar.rows() == 1 && scalar.cols() == 1, "grad: output is not a scalar");
    return grad({scalar}, {leaf(Matrix::Ones(1, 1))}, wrt);
}

std::vector<Matrix> Tape::grad_values(const std::vector<Var> &outputs, const std::vector<Matrix> &seeds,
                                      const std::vector<Var> &wrt) {
    require(outputs.size() == seeds.size(), "grad: one seed per output");
    std::vector<Matrix> result;
    if (wrt.empty()) return result;
    int lo = wrt.front().id(), hi = -1;
    for (const auto &w : wrt) lo = std::min(lo, w.id());
    for (const auto &o : outputs) hi = std::max(hi, o.id());
    std::vector<std::optional<Matrix>> adj;
    std::vector<char> keep;
    if (hi >= lo) {
        adj.resize(static_cast<std::size_t>(hi - lo + 1));
        keep.assign(adj.size(), 0);
        for (const auto &w : wrt)
            if (w.id() <= hi) keep[static_cast<std::size_t>(w.id() - lo)] = 1;
        for (std::size_t k = 0; k < outputs.size(); ++k) {
            check_seed_shape(outputs[k].value(), seeds[k]);
            if (outputs[k].id() >= lo)
                accumulate(adj[static_cast<std::size_t>(outputs[k].id() - lo)], Matrix(seeds[k]));
        }
        sweep<Matrix>(*this, NumSource{this}, adj, lo, hi, keep);
    }
    for (const auto &w : wrt) {
        if (w.id() <= hi && adj[static_cast<std::size_t>(w.id() - lo)])
            result.push_back(std::move(*adj[static_cast<std::size_t>(w.id() - lo)]));
        else
            result.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
    return result;
}

std::vector<Matrix> Tape::grad_values(Var scalar, const std::vector<Var> &wrt) {
    require(scalar.rows() == 1 && scalar.cols() == 1, "grad: output is not a scalar");
    return grad_values({scalar}, {Matrix::Ones(1, 1)}, wrt);
}

} // namespace se3ham::ad
