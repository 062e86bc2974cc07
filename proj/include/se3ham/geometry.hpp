// Lie-group helpers on SO(3) and SE(3) plus the structure matrices of the
// port-Hamiltonian rigid-body model. Everything here is templated on the
// scalar type and works on fixed-size Eigen objects.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "se3ham/errors.hpp"

namespace se3ham {

template <typename S> using Vector3 = Eigen::Matrix<S, 3, 1>;
template <typename S> using Matrix3 = Eigen::Matrix<S, 3, 3>;
template <typename S> using Vector6 = Eigen::Matrix<S, 6, 1>;
template <typename S> using Matrix6 = Eigen::Matrix<S, 6, 6>;
template <typename S> using Vector9 = Eigen::Matrix<S, 9, 1>;
template <typename S> using Vector12 = Eigen::Matrix<S, 12, 1>;
template <typename S> using Matrix12x6 = Eigen::Matrix<S, 12, 6>;

using Vec3 = Vector3<double>;
using Mat3 = Matrix3<double>;
using Vec6 = Vector6<double>;
using Mat6 = Matrix6<double>;
using Vec9 = Vector9<double>;
using Vec12 = Vector12<double>;
using Mat12x6 = Matrix12x6<double>;

/// hat(w) * x == w.cross(x)
template <typename S> Matrix3<S> hat3(const Vector3<S> &w) {
    Matrix3<S> W;
    W << S(0), -w(2), w(1),
         w(2), S(0), -w(0),
         -w(1), w(0), S(0);
    return W;
}

/// Inverse of hat3. Throws NotSkew when S is not skew-symmetric up to
/// 1e-8 (1 + |S|).
template <typename S> Vector3<S> vee3(const Matrix3<S> &M) {
    using std::abs;
    const S asym = (M + M.transpose()).norm();
    if (asym > S(1e-8) * (S(1) + M.norm()))
        throw Error(ErrorCode::NotSkew, "matrix is not skew-symmetric");
    return Vector3<S>(M(2, 1), M(0, 2), M(1, 0));
}

/// vee of the skew part, without the symmetry check.
template <typename S> Vector3<S> vee_skew_part(const Matrix3<S> &M) {
    return Vector3<S>(M(2, 1) - M(1, 2), M(0, 2) - M(2, 0), M(1, 0) - M(0, 1)) * S(0.5);
}

/// Rodrigues formula with a series expansion near zero.
template <typename S> Matrix3<S> exp_so3(const Vector3<S> &w) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    const S th2 = w.squaredNorm();
    const S th = sqrt(th2);
    S a, b;
    if (th < S(1e-4)) {
        a = S(1) - th2 / S(6) + th2 * th2 / S(120);
        b = S(0.5) - th2 / S(24) + th2 * th2 / S(720);
    } else {
        a = sin(th) / th;
        b = (S(1) - cos(th)) / th2;
    }
    const Matrix3<S> W = hat3(w);
    return Matrix3<S>::Identity() + a * W + b * W * W;
}

template <typename S> struct So3Log {
    Vector3<S> omega;
    bool near_pi = false;
};

/// Principal logarithm with |omega| in [0, pi]. near_pi is raised when
/// trace(R) <= -1 + 1e-6, where the axis sign is ambiguous.
template <typename S> So3Log<S> log_so3_flagged(const Matrix3<S> &R) {
    using std::atan2;
    using std::sqrt;
    const S tr = R.trace();
    const S c = std::clamp((tr - S(1)) / S(2), S(-1), S(1));
    const Vector3<S> sv = vee_skew_part(R); // sin(theta) * axis
    So3Log<S> out;
    out.near_pi = tr <= S(-1) + S(1e-6);
    if (c > S(-0.99)) {
        const S s = sv.norm();
        const S th = atan2(s, c);
        S k;
        if (th < S(1e-4))
            k = S(1) + th * th / S(6) + S(7) * th * th * th * th / S(360);
        else
            k = th / s;
        out.omega = k * sv;
        return out;
    }
    // (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) a a^T
    const Matrix3<S> B = (R + R.transpose()) * S(0.5) - c * Matrix3<S>::Identity();
    int i = 0;
    B.diagonal().maxCoeff(&i);
    Vector3<S> axis = B.col(i) / sqrt(std::max(B(i, i), S(1e-300)));
    axis.normalize();
    S s = axis.dot(sv);
    if (s < S(0)) {
        axis = -axis;
        s = -s;
    }
    out.omega = atan2(s, c) * axis;
    return out;
}

template <typename S> Vector3<S> log_so3(const Matrix3<S> &R) { return log_so3_flagged(R).omega; }

/// Row-major 9-vector [r1; r2; r3] -> R.
template <typename S, typename Derived> Matrix3<S> rows_to_matrix(const Eigen::MatrixBase<Derived> &r) {
    Matrix3<S> R;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) R(i, j) = r(3 * i + j);
    return R;
}

template <typename S> Vector9<S> matrix_to_rows(const Matrix3<S> &R) {
    Vector9<S> r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(3 * i + j) = R(i, j);
    return r;
}

/// Structure matrix q_cross(q) with q_dot = q_cross * zeta.
template <typename S> Matrix12x6<S> q_cross(const Matrix3<S> &R) {
    Matrix12x6<S> Q = Matrix12x6<S>::Zero();
    Q.template block<3, 3>(0, 0) = R;
    for (int i = 0; i < 3; ++i) {
        const Vector3<S> ri = R.row(i).transpose();
        Q.template block<3, 3>(3 + 3 * i, 3) = hat3(ri);
    }
    return Q;
}

/// p_cross(p) = [[0, hat(pv)], [hat(pv), hat(pw)]]
template <typename S> Matrix6<S> p_cross(const Vector6<S> &p) {
    Matrix6<S> P = Matrix6<S>::Zero();
    const Matrix3<S> Hv = hat3<S>(p.template head<3>());
    P.template block<3, 3>(0, 3) = Hv;
    P.template block<3, 3>(3, 0) = Hv;
    P.template block<3, 3>(3, 3) = hat3<S>(p.template tail<3>());
    return P;
}

/// 1/2 (K R*^T R - R^T R* K^T)^vee
template <typename S>
Vector3<S> rotation_error_vec(const Matrix3<S> &R, const Matrix3<S> &Rstar, const Matrix3<S> &K) {
    const Matrix3<S> A = K * Rstar.transpose() * R;
    return vee_skew_part(A);
}

/// tr(I - R*^T R), in [0, 4].
template <typename S> S rotation_error_scalar(const Matrix3<S> &R, const Matrix3<S> &Rstar) {
    return S(3) - (Rstar.transpose() * R).trace();
}

/// tr(K (I - R*^T R))
template <typename S> S rotation_error_scalar(const Matrix3<S> &R, const Matrix3<S> &Rstar, const Matrix3<S> &K) {
    return (K * (Matrix3<S>::Identity() - Rstar.transpose() * R)).trace();
}

template <typename S> S orthogonality_error(const Matrix3<S> &R) {
    return (R * R.transpose() - Matrix3<S>::Identity()).norm();
}

template <typename S> S determinant_error(const Matrix3<S> &R) {
    using std::abs;
    return abs(R.determinant() - S(1));
}

/// Nearest rotation via the polar Newton iteration X <- (X + X^-T) / 2.
template <typename S> Matrix3<S> project_so3(const Matrix3<S> &M) {
    if (!M.allFinite() || M.determinant() <= S(1e-9))
        throw Error(ErrorCode::Degenerate, "cannot project onto SO(3)");
    Matrix3<S> X = M;
    for (int it = 0; it < 50; ++it) {
        const Matrix3<S> Xn = S(0.5) * (X + X.inverse().transpose());
        const S d = (Xn - X).norm();
        X = Xn;
        if (d < S(1e-15)) break;
    }
    return X;
}

/// Rotation with invariants checked at construction.
template <typename S> class Rotation {
  public:
    Rotation() : m_(Matrix3<S>::Identity()) {}

    static Rotation from_matrix(const Matrix3<S> &M, S tol = S(1e-6)) {
        if (!M.allFinite() || orthogonality_error(M) > tol || determinant_error(M) > tol)
            throw Error(ErrorCode::NotRotation, "matrix is not a rotation");
        Rotation r;
        r.m_ = M;
        return r;
    }
    template <typename Derived> static Rotation from_rows(const Eigen::MatrixBase<Derived> &r, S tol = S(1e-6)) {
        return from_matrix(rows_to_matrix<S>(r), tol);
    }
    static Rotation exp(const Vector3<S> &w) {
        Rotation r;
        r.m_ = exp_so3(w);
        return r;
    }
    static Rotation about_z(S angle) { return exp(Vector3<S>(S(0), S(0), angle)); }

    const Matrix3<S> &matrix() const { return m_; }
    Vector3<S> row(int i) const { return m_.row(i).transpose(); }
    Vector9<S> rows() const { return matrix_to_rows(m_); }
    Vector3<S> log() const { return log_so3(m_); }
    Rotation inverse() const {
        Rotation r;
        r.m_ = m_.transpose();
        return r;
    }
    Rotation operator*(const Rotation &o) const {
        Rotation r;
        r.m_ = m_ * o.m_;
        return r;
    }
    Vector3<S> operator*(const Vector3<S> &v) const { return m_ * v; }

  private:
    Matrix3<S> m_;
};

using Rot = Rotation<double>;

/// q = [p; r1; r2; r3] on SE(3).
template <typename S> struct GeneralizedCoords {
    Vector3<S> p = Vector3<S>::Zero();
    Rotation<S> R;

    Vector12<S> to_vector() const {
        Vector12<S> q;
        q << p, R.rows();
        return q;
    }
    template <typename Derived> static GeneralizedCoords from_vector(const Eigen::MatrixBase<Derived> &q, S tol = S(1e-6)) {
        if (q.size() != 12) throw Error(ErrorCode::DimMismatch, "SE(3) coordinates need 12 entries");
        GeneralizedCoords c;
        c.p = q.template head<3>();
        c.R = Rotation<S>::from_rows(q.template segment<9>(3), tol);
        return c;
    }
};

/// Generalized momentum [pv; pw] in the body frame.
template <typename S> struct Momentum {
    Vector3<S> pv = Vector3<S>::Zero();
    Vector3<S> pw = Vector3<S>::Zero();

    Vector6<S> to_vector() const {
        Vector6<S> m;
        m << pv, pw;
        return m;
    }
};

} // namespace se3ham
