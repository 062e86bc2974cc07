// Reverse-mode automatic differentiation over dense matrices.
//
// Every node holds a matrix whose columns are independent batch samples.
// Backward rules are written against the same operator set, so the reverse
// sweep can itself be recorded (Tape::grad) and differentiated again, or run
// purely numerically (Tape::grad_values).
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <vector>

namespace se3ham::ad {

using Matrix = Eigen::MatrixXd;
using Index = std::vector<int>;

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    Scale,
    Tanh,
    OneMinusSq,
    MatMul,
    Expand,
    ReduceTo,
    Gather,
    Scatter,
    Concat,
    BatchMatMul,
    Solve3,
    Cross3,
    AngleSq,
    AngleSqGrad,
};

struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    std::vector<int> extra;
    Matrix value;
    double s = 0.0;
    int d0 = 0, d1 = 0, d2 = 0;
    bool ta = false;
    bool tb = false;
    std::shared_ptr<const Index> index;
};

class Tape;

class Var {
  public:
    Var() = default;
    Var(Tape *t, int id) : tape_(t), id_(id) {}

    const Matrix &value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    int id() const { return id_; }
    Tape *tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

  private:
    Tape *tape_ = nullptr;
    int id_ = -1;
};

class Tape {
  public:
    explicit Tape(std::size_t max_nodes = 20'000'000) : max_nodes_(max_nodes) {}
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    Var leaf(Matrix v);
    std::size_t size() const { return nodes_.size(); }
    std::size_t max_nodes() const { return max_nodes_; }
    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }
    const Node &node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    const Matrix &value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Var push(Node &&n);

    /// Vector-Jacobian product sum_k seeds[k]^T d outputs[k] / d wrt, recorded
    /// on the tape so that the result can be differentiated again. Only paths
    /// that start at nodes no newer than the outputs are followed.
    std::vector<Var> grad(const std::vector<Var> &outputs, const std::vector<Var> &seeds,
                          const std::vector<Var> &wrt);
    std::vector<Var> grad(Var scalar, const std::vector<Var> &wrt);

    /// Same product computed numerically without recording.
    std::vector<Matrix> grad_values(const std::vector<Var> &outputs, const std::vector<Matrix> &seeds,
                                    const std::vector<Var> &wrt);
    std::vector<Matrix> grad_values(Var scalar, const std::vector<Var> &wrt);

  private:
    std::vector<Node> nodes_;
    std::size_t max_nodes_;
};

// Numeric kernels. The differentiable versions below share names so that the
// backward rules can be written once for both matrices and variables.
Matrix add(const Matrix &x, const Matrix &y);
Matrix sub(const Matrix &x, const Matrix &y);
Matrix mul(const Matrix &x, const Matrix &y);
Matrix neg(const Matrix &x);
Matrix scale(const Matrix &x, double s);
Matrix tanh(const Matrix &x);
Matrix one_minus_sq(const Matrix &x);
Matrix matmul(const Matrix &x, const Matrix &y, bool ta = false, bool tb = false);
Matrix expand(const Matrix &x, Eigen::Index rows, Eigen::Index cols);
Matrix reduce_to(const Matrix &x, Eigen::Index rows, Eigen::Index cols);
Matrix gather(const Matrix &x, const std::shared_ptr<const Index> &idx);
Matrix scatter(const Matrix &x, const std::shared_ptr<const Index> &idx, Eigen::Index rows);
Matrix concat(const std::vector<Matrix> &xs);
Matrix bmm(const Matrix &A, const Matrix &B, int n, int k, int m, bool ta, bool tb);
Matrix solve3(const Matrix &A, const Matrix &b, bool ta);
Matrix cross3(const Matrix &x, const Matrix &y);
Matrix angle_sq(const Matrix &c);
Matrix angle_sq_grad(const Matrix &c);

Var add(const Var &x, const Var &y);
Var sub(const Var &x, const Var &y);
Var mul(const Var &x, const Var &y);
Var neg(const Var &x);
Var scale(const Var &x, double s);
Var tanh(const Var &x);
Var one_minus_sq(const Var &x);
Var matmul(const Var &x, const Var &y, bool ta = false, bool tb = false);
Var expand(const Var &x, Eigen::Index rows, Eigen::Index cols);
Var reduce_to(const Var &x, Eigen::Index rows, Eigen::Index cols);
Var gather(const Var &x, const std::shared_ptr<const Index> &idx);
Var scatter(const Var &x, const std::shared_ptr<const Index> &idx, Eigen::Index rows);
Var concat(const std::vector<Var> &xs);
/// Batched small products. Column b of A holds a row-major matrix (n x k, or
/// k x n when ta); column b of B holds k x m (m x k when tb). Result n x m.
Var bmm(const Var &A, const Var &B, int n, int k, int m, bool ta = false, bool tb = false);
/// Per-column solve of a row-major 3x3 system (transposed when ta).
Var solve3(const Var &A, const Var &b, bool ta = false);
Var cross3(const Var &x, const Var &y);
/// acos(c)^2 elementwise, the squared rotation angle from its cosine.
Var angle_sq(const Var &c);
Var angle_sq_grad(const Var &c);

inline Var operator+(const Var &x, const Var &y) { return add(x, y); }
inline Var operator-(const Var &x, const Var &y) { return sub(x, y); }
inline Var operator-(const Var &x) { return neg(x); }
inline Var operator*(double s, const Var &x) { return scale(x, s); }

/// Identity node, used to split a value into an independent branch.
inline Var alias(const Var &x) { return scale(x, 1.0); }
Var rows(const Var &x, int start, int count);
Var sum_all(const Var &x);
Var constant_like(Tape &t, const Matrix &m);

std::shared_ptr<const Index> make_index(Index idx);
std::shared_ptr<const Index> range_index(int start, int count);

} // namespace se3ham::ad
