#pragma once

// Small dense numerics that live outside the differentiation graph:
// singular values, eigenvalues of real nonsymmetric matrices, orthogonality
// measures and inversion. Everything is templated on the scalar type and
// works on any Eigen expression.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kae/errors.hpp"

namespace kae::linalg {

template <class T> using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T> using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

inline constexpr Eigen::Index kMaxDim = 256;
inline constexpr int kSvdMaxSweeps = 60;
inline constexpr double kSvdTolerance = 1e-12;

/// a = u * diag(sigma) * v^T with sigma sorted descending.
template <class T> struct SvdResult {
    Matrix<T> u;
    Vector<T> sigma;
    Matrix<T> v;
    int sweeps = 0;

    Matrix<T> reconstruct() const { return u * sigma.asDiagonal() * v.transpose(); }
};

template <class T> struct Spectrum {
    std::vector<std::complex<T>> eigenvalues;

    std::complex<T> sum() const {
        return std::accumulate(eigenvalues.begin(), eigenvalues.end(), std::complex<T>(0));
    }
    std::complex<T> product() const {
        return std::accumulate(eigenvalues.begin(), eigenvalues.end(), std::complex<T>(1),
                               std::multiplies<>());
    }
    /// max_i | |lambda_i| - 1 |
    T max_unit_deviation() const {
        T dev = 0;
        for (const auto& l : eigenvalues) dev = std::max(dev, std::abs(std::abs(l) - T(1)));
        return dev;
    }
};

namespace detail {

template <class Derived> void require_square(const Eigen::MatrixBase<Derived>& a, const char* op) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw DimensionError(std::string(op) + ": expected a non-empty square matrix, got " +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
    if (a.rows() > kMaxDim)
        throw DimensionError(std::string(op) + ": dimension " + std::to_string(a.rows()) +
                             " exceeds " + std::to_string(kMaxDim));
}

template <class Derived> void require_finite(const Eigen::MatrixBase<Derived>& a, const char* op) {
    if (!a.allFinite()) throw DomainError(std::string(op) + ": non-finite entry");
}

// Fills the columns of `u` flagged in `missing` with unit vectors orthogonal
// to every other column (modified Gram-Schmidt against the standard basis).
template <class T> void complete_orthonormal(Matrix<T>& u, const std::vector<bool>& missing) {
    const Eigen::Index m = u.rows();
    std::vector<bool> have(missing.size());
    for (std::size_t j = 0; j < missing.size(); ++j) have[j] = !missing[j];
    for (Eigen::Index j = 0; j < m; ++j) {
        if (!missing[j]) continue;
        Vector<T> best;
        T best_norm = -1;
        for (Eigen::Index k = 0; k < m; ++k) {
            Vector<T> cand = Vector<T>::Unit(m, k);
            for (int pass = 0; pass < 2; ++pass)
                for (Eigen::Index i = 0; i < m; ++i)
                    if (have[i]) cand -= u.col(i).dot(cand) * u.col(i);
            const T n = cand.norm();
            if (n > best_norm) {
                best_norm = n;
                best = cand;
            }
        }
        u.col(j) = best / best_norm;
        have[j] = true;
    }
}

template <class T> void balance(Matrix<T>& a) {
    constexpr T radix = 2;
    const T sqrdx = radix * radix;
    const Eigen::Index n = a.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            T r = 0, c = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0 || r == 0) continue;
            T g = r / radix;
            T f = 1;
            const T s = c + r;
            while (c < g) {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= sqrdx;
            }
            if ((c + r) / f < T(0.95) * s) {
                done = false;
                a.row(i) /= f;
                a.col(i) *= f;
            }
        }
    }
}

// Householder reduction to upper Hessenberg form (similarity transform).
template <class T> void hessenberg(Matrix<T>& h) {
    const Eigen::Index n = h.rows();
    for (Eigen::Index k = 0; k + 2 < n; ++k) {
        const Eigen::Index len = n - k - 1;
        Vector<T> v = h.col(k).tail(len);
        const T xnorm = v.norm();
        if (xnorm == 0) continue;
        const T alpha = v(0) >= 0 ? -xnorm : xnorm;
        v(0) -= alpha;
        const T vnorm = v.norm();
        if (vnorm == 0) continue;
        v /= vnorm;
        h.bottomRows(len) -= T(2) * v * (v.transpose() * h.bottomRows(len));
        h.rightCols(len) -= T(2) * (h.rightCols(len) * v) * v.transpose();
        h.col(k).tail(len - 1).setZero();
        h(k + 1, k) = alpha;
    }
}

template <class T> T sign_of(T a, T b) { return b >= 0 ? std::abs(a) : -std::abs(a); }

// Francis double-shift QR on an upper Hessenberg matrix, with exceptional
// shifts after 10 and 20 stagnant iterations on the same eigenvalue.
template <class T> std::vector<std::complex<T>> hessenberg_qr(Matrix<T>& a, long max_iterations) {
    const int n = static_cast<int>(a.rows());
    const T eps = std::numeric_limits<T>::epsilon();
    std::vector<std::complex<T>> w(n);
    T anorm = 0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

    long total = 0;
    int nn = n - 1;
    T t = 0;
    while (nn >= 0) {
        int its = 0;
        int l = 0;
        do {
            for (l = nn; l > 0; --l) {
                T s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0) s = anorm;
                if (std::abs(a(l, l - 1)) <= eps * s) {
                    a(l, l - 1) = 0;
                    break;
                }
            }
            T x = a(nn, nn);
            if (l == nn) {
                w[nn--] = x + t;
            } else {
                T y = a(nn - 1, nn - 1);
                T ww = a(nn, nn - 1) * a(nn - 1, nn);
                if (l == nn - 1) {
                    const T p = T(0.5) * (y - x);
                    const T q = p * p + ww;
                    T z = std::sqrt(std::abs(q));
                    x += t;
                    if (q >= 0) {
                        z = p + sign_of(z, p);
                        w[nn - 1] = w[nn] = x + z;
                        if (z != 0) w[nn] = x - ww / z;
                    } else {
                        w[nn] = std::complex<T>(x + p, -z);
                        w[nn - 1] = std::conj(w[nn]);
                    }
                    nn -= 2;
                } else {
                    if (++total > max_iterations)
                        throw NumericalError("eigenvalues: QR iteration did not converge after " +
                                             std::to_string(max_iterations) + " iterations (" +
                                             std::to_string(nn + 1) + " eigenvalues unresolved)");
                    if (its == 10 || its == 20) {
                        t += x;
                        for (int i = 0; i <= nn; ++i) a(i, i) -= x;
                        const T s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                        y = x = T(0.75) * s;
                        ww = T(-0.4375) * s * s;
                    }
                    ++its;
                    int m = nn - 2;
                    T p = 0, q = 0, r = 0, z = 0;
                    for (; m >= l; --m) {
                        z = a(m, m);
                        r = x - z;
                        T s = y - z;
                        p = (r * s - ww) / a(m + 1, m) + a(m, m + 1);
                        q = a(m + 1, m + 1) - z - r - s;
                        r = a(m + 2, m + 1);
                        s = std::abs(p) + std::abs(q) + std::abs(r);
                        p /= s;
                        q /= s;
                        r /= s;
                        if (m == l) break;
                        const T u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                        const T v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) +
                                                   std::abs(a(m + 1, m + 1)));
                        if (u <= eps * v) break;
                    }
                    for (int i = m; i < nn - 1; ++i) {
                        a(i + 2, i) = 0;
                        if (i != m) a(i + 2, i - 1) = 0;
                    }
                    for (int k = m; k < nn; ++k) {
                        if (k != m) {
                            p = a(k, k - 1);
                            q = a(k + 1, k - 1);
                            r = 0;
                            if (k + 1 != nn) r = a(k + 2, k - 1);
                            if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0) {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        const T s = sign_of(std::sqrt(p * p + q * q + r * r), p);
                        if (s == 0) continue;
                        if (k == m) {
                            if (l != m) a(k, k - 1) = -a(k, k - 1);
                        } else {
                            a(k, k - 1) = -s * x;
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for (int j = k; j <= nn; ++j) {
                            p = a(k, j) + q * a(k + 1, j);
                            if (k + 1 != nn) {
                                p += r * a(k + 2, j);
                                a(k + 2, j) -= p * z;
                            }
                            a(k + 1, j) -= p * y;
                            a(k, j) -= p * x;
                        }
                        const int mmin = nn < k + 3 ? nn : k + 3;
                        for (int i = l; i <= mmin; ++i) {
                            p = x * a(i, k) + y * a(i, k + 1);
                            if (k + 1 != nn) {
                                p += z * a(i, k + 2);
                                a(i, k + 2) -= p * r;
                            }
                            a(i, k + 1) -= p * q;
                            a(i, k) -= p;
                        }
                    }
                }
            }
        } while (l + 1 < nn);
    }
    return w;
}

} // namespace detail

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
///
/// Cyclic sweeps over column pairs until every pair is orthogonal to a
/// relative tolerance of 1e-12 (machine epsilon for float); at most 60 sweeps. Singular values come out
/// non-negative and sorted descending, with any sign absorbed into `u`.
template <class Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& a) {
    using T = typename Derived::Scalar;
    detail::require_square(a, "svd");
    detail::require_finite(a, "svd");
    const Eigen::Index m = a.rows();

    const T tol = std::max(T(kSvdTolerance), std::numeric_limits<T>::epsilon());
    Matrix<T> w = a;
    Matrix<T> v = Matrix<T>::Identity(m, m);
    bool rotated = true;
    int sweeps = 0;
    while (rotated) {
        if (sweeps == kSvdMaxSweeps)
            throw NumericalError("svd: Jacobi sweeps did not converge after " +
                                 std::to_string(kSvdMaxSweeps) + " sweeps");
        rotated = false;
        ++sweeps;
        for (Eigen::Index p = 0; p + 1 < m; ++p) {
            for (Eigen::Index q = p + 1; q < m; ++q) {
                const T alpha = w.col(p).squaredNorm();
                const T beta = w.col(q).squaredNorm();
                const T gamma = w.col(p).dot(w.col(q));
                if (gamma == 0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta))
                    continue;
                rotated = true;
                const T zeta = (beta - alpha) / (2 * gamma);
                const T t = std::copysign(T(1), zeta) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
                const T c = 1 / std::sqrt(1 + t * t);
                const T s = c * t;
                for (Matrix<T>* mat : {&w, &v}) {
                    const Vector<T> cp = mat->col(p);
                    mat->col(p) = c * cp - s * mat->col(q);
                    mat->col(q) = s * cp + c * mat->col(q);
                }
            }
        }
    }

    Vector<T> norms = w.colwise().norm().transpose();
    std::vector<Eigen::Index> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return norms(i) > norms(j); });

    SvdResult<T> out;
    out.sweeps = sweeps;
    out.u.resize(m, m);
    out.v.resize(m, m);
    out.sigma.resize(m);
    const T floor = norms.maxCoeff() * T(m) * std::numeric_limits<T>::epsilon();
    std::vector<bool> missing(m, false);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index src = order[j];
        out.sigma(j) = norms(src);
        out.v.col(j) = v.col(src);
        if (norms(src) > floor && norms(src) > 0) {
            out.u.col(j) = w.col(src) / norms(src);
        } else {
            out.u.col(j).setZero();
            missing[j] = true;
        }
    }
    if (std::find(missing.begin(), missing.end(), true) != missing.end())
        detail::complete_orthonormal(out.u, missing);
    return out;
}

/// Eigenvalues of a real square matrix: balancing, Householder Hessenberg
/// reduction, then shifted QR with at most 100*M iterations in total.
/// Complex eigenvalues are returned as adjacent conjugate pairs.
template <class Derived>
Spectrum<typename Derived::Scalar> eigenvalues(const Eigen::MatrixBase<Derived>& a) {
    using T = typename Derived::Scalar;
    detail::require_square(a, "eigenvalues");
    detail::require_finite(a, "eigenvalues");
    Matrix<T> h = a;
    detail::balance(h);
    detail::hessenberg(h);
    return {detail::hessenberg_qr(h, 100L * static_cast<long>(h.rows()))};
}

/// ||A^T A - I||_F
template <class Derived>
typename Derived::Scalar orthogonality_defect(const Eigen::MatrixBase<Derived>& a) {
    using T = typename Derived::Scalar;
    detail::require_square(a, "orthogonality_defect");
    return (a.transpose() * a - Matrix<T>::Identity(a.rows(), a.cols())).norm();
}

/// Inverse of a square matrix whose 2-norm condition number is below 1e12.
template <class Derived>
Matrix<typename Derived::Scalar> invert(const Eigen::MatrixBase<Derived>& a) {
    using T = typename Derived::Scalar;
    detail::require_square(a, "invert");
    detail::require_finite(a, "invert");
    const auto s = svd(a);
    const T smax = s.sigma(0);
    const T smin = s.sigma(s.sigma.size() - 1);
    if (smin == 0 || smax / smin >= T(1e12))
        throw SingularityError("invert: matrix is singular or ill-conditioned (cond estimate " +
                               (smin == 0 ? std::string("inf") : std::to_string(smax / smin)) + ")");
    Matrix<T> dense = a;
    return dense.partialPivLu().inverse();
}

/// Orthogonal factor Q of a QR factorization, with column signs chosen so
/// that R has a positive diagonal.
template <class Derived>
Matrix<typename Derived::Scalar> orthonormalize(const Eigen::MatrixBase<Derived>& a) {
    using T = typename Derived::Scalar;
    detail::require_square(a, "orthonormalize");
    Eigen::HouseholderQR<Matrix<T>> qr(a);
    Matrix<T> q = qr.householderQ();
    const Matrix<T>& r = qr.matrixQR();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    return q;
}

} // namespace kae::linalg
