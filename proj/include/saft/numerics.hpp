#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "saft/errors.hpp"

namespace saft {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vec<double>;
using MatrixXd = Mat<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
    return v.allFinite();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& v, const char* what) {
    if (!v.allFinite()) throw NonFiniteError(std::string(what) + " contains NaN or Inf");
}

namespace detail {

template <typename Derived>
typename Derived::Scalar checked_norm(const Eigen::MatrixBase<Derived>& v, const char* what) {
    const auto n = v.norm();
    if (!std::isfinite(n)) throw NonFiniteError(std::string(what) + ": vector has non-finite norm");
    if (!(n > 0)) throw DegenerateInputError(std::string(what) + ": vector has zero norm");
    return n;
}

}  // namespace detail

/// (u . v) / (|u| |v|), clamped to [-1, 1]. Throws DegenerateInputError on a
/// zero-norm argument instead of returning a convention value.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& u,
                                            const Eigen::MatrixBase<DerivedB>& v) {
    using Scalar = typename DerivedA::Scalar;
    if (u.size() != v.size() || u.size() == 0) {
        throw ShapeMismatchError("cosine_similarity: lengths " + std::to_string(u.size()) + " and " +
                                 std::to_string(v.size()));
    }
    const Scalar nu = detail::checked_norm(u, "cosine_similarity");
    const Scalar nv = detail::checked_norm(v, "cosine_similarity");
    const Scalar c = u.dot(v) / (nu * nv);
    return std::clamp(c, Scalar(-1), Scalar(1));
}

/// Gradient of cosine_similarity(u, v) with respect to u:
///   v / (|u||v|) - cos(u, v) * u / |u|^2
/// The unclamped cosine is used so the result is the true derivative.
template <typename DerivedA, typename DerivedB>
Vec<typename DerivedA::Scalar> cosine_similarity_grad(const Eigen::MatrixBase<DerivedA>& u,
                                                      const Eigen::MatrixBase<DerivedB>& v) {
    using Scalar = typename DerivedA::Scalar;
    if (u.size() != v.size() || u.size() == 0) {
        throw ShapeMismatchError("cosine_similarity_grad: length mismatch");
    }
    const Scalar nu = detail::checked_norm(u, "cosine_similarity_grad");
    const Scalar nv = detail::checked_norm(v, "cosine_similarity_grad");
    const Scalar c = u.dot(v) / (nu * nv);
    return v / (nu * nv) - (c / (nu * nu)) * u;
}

template <typename Derived>
Vec<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
    const auto n = detail::checked_norm(v, "l2_normalize");
    return v / n;
}

/// Central-difference gradient of a scalar function. Component i is
/// (f(x + h e_i) - f(x - h e_i)) / (2h). This is the reference oracle every
/// analytic gradient in the project is checked against.
template <typename Scalar>
Vec<Scalar> finite_diff_grad(const std::function<Scalar(const Vec<Scalar>&)>& f, const Vec<Scalar>& x,
                             Scalar h) {
    if (!(h > 0)) throw ConfigError("finite_diff_grad: step must be positive");
    Vec<Scalar> grad(x.size());
    Vec<Scalar> probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Scalar orig = probe[i];
        probe[i] = orig + h;
        const Scalar fp = f(probe);
        probe[i] = orig - h;
        const Scalar fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NonFiniteError("finite_diff_grad: f is not finite near coordinate " + std::to_string(i));
        }
        grad[i] = (fp - fm) / (Scalar(2) * h);
    }
    return grad;
}

/// ||a - b||_inf / ||b||_inf, falling back to the absolute error when the
/// reference is (numerically) zero.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar max_relative_error(const Eigen::MatrixBase<DerivedA>& analytic,
                                             const Eigen::MatrixBase<DerivedB>& reference) {
    using Scalar = typename DerivedA::Scalar;
    const Scalar diff = (analytic - reference).template lpNorm<Eigen::Infinity>();
    const Scalar scale = reference.template lpNorm<Eigen::Infinity>();
    return scale > Scalar(1e-8) ? diff / scale : diff;
}

}  // namespace saft
