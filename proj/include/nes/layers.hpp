#pragma once

#include <cmath>
#include <vector>

#include "nes/core.hpp"

namespace nes {

// Linear layers around the RBM core. Row-vector convention throughout:
// a feature row v maps through a matrix A as v * A, which in column form
// below reads A.transpose() * v.

/// Per-context-channel D x D transforms; the extracted feature is the sum
/// of all transformed channel features.
template <typename Scalar = double>
struct ContextTransformT {
    std::vector<Matrix<Scalar>> F;  // n_ctx matrices, each D x D

    Index context_count() const { return static_cast<Index>(F.size()); }
    Index dim() const { return F.empty() ? 0 : F.front().rows(); }

    static ContextTransformT random(Index n_ctx, Index dim, Rng& rng) {
        ContextTransformT ct;
        const Scalar a = Scalar(1) / std::sqrt(static_cast<Scalar>(dim));
        ct.F.reserve(static_cast<std::size_t>(n_ctx));
        for (Index i = 0; i < n_ctx; ++i) {
            Matrix<Scalar> f(dim, dim);
            for (Index r = 0; r < dim; ++r)
                for (Index c = 0; c < dim; ++c)
                    f(r, c) = static_cast<Scalar>(rng.uniform(-a, a));
            ct.F.push_back(std::move(f));
        }
        return ct;
    }
};

/// Projects the spoken-EEG vector y into the extracted-feature space.
template <typename Scalar = double>
struct BiasMapT {
    Matrix<Scalar> M;  // M_dim x D

    static BiasMapT random(Index m_dim, Index dim, Rng& rng) {
        BiasMapT bm;
        const Scalar a = Scalar(1) / std::sqrt(static_cast<Scalar>(dim));
        bm.M.resize(m_dim, dim);
        for (Index r = 0; r < m_dim; ++r)
            for (Index c = 0; c < dim; ++c) bm.M(r, c) = static_cast<Scalar>(rng.uniform(-a, a));
        return bm;
    }
};

/// Maps the hidden representation into the speech feature space.
template <typename Scalar = double>
struct SpeechProjectionT {
    Matrix<Scalar> J;  // K x L

    static SpeechProjectionT random(Index k_dim, Index l_dim, Rng& rng) {
        SpeechProjectionT sp;
        const Scalar a = Scalar(1) / std::sqrt(static_cast<Scalar>(k_dim));
        sp.J.resize(k_dim, l_dim);
        for (Index r = 0; r < k_dim; ++r)
            for (Index c = 0; c < l_dim; ++c) sp.J(r, c) = static_cast<Scalar>(rng.uniform(-a, a));
        return sp;
    }
};

using ContextTransform = ContextTransformT<double>;
using BiasMap = BiasMapT<double>;
using SpeechProjection = SpeechProjectionT<double>;

/// x_hat = sum_i xs[i] * F[i]; context rows are the rows of `xs`.
template <typename Scalar>
Vector<Scalar> context_forward(const MatrixCRef<Scalar>& xs,
                               const ContextTransformT<Scalar>& ct) {
    if (xs.rows() != ct.context_count())
        throw ConfigError("context_forward: context count mismatch");
    if (xs.cols() != ct.dim()) throw ConfigError("context_forward: feature dim mismatch");
    Vector<Scalar> xhat = Vector<Scalar>::Zero(ct.dim());
    for (Index i = 0; i < xs.rows(); ++i)
        xhat.noalias() += ct.F[static_cast<std::size_t>(i)].transpose() * xs.row(i).transpose();
    return xhat;
}

template <typename Scalar>
struct ContextGradsT {
    std::vector<Matrix<Scalar>> F;  // dL/dF[i]
    Matrix<Scalar> xs;              // dL/dxs, row per context
};

/// dL/dF[i] = outer(xs[i], g); dL/dxs[i] = g * F[i]^T.
template <typename Scalar>
ContextGradsT<Scalar> context_backward(const VectorCRef<Scalar>& grad_xhat,
                                       const MatrixCRef<Scalar>& xs,
                                       const ContextTransformT<Scalar>& ct) {
    if (xs.rows() != ct.context_count() || xs.cols() != ct.dim() || grad_xhat.size() != ct.dim())
        throw ConfigError("context_backward: shape mismatch");
    ContextGradsT<Scalar> grads;
    grads.F.reserve(ct.F.size());
    grads.xs.resize(xs.rows(), xs.cols());
    for (Index i = 0; i < xs.rows(); ++i) {
        grads.F.push_back(xs.row(i).transpose() * grad_xhat.transpose());
        grads.xs.row(i) = (ct.F[static_cast<std::size_t>(i)] * grad_xhat).transpose();
    }
    return grads;
}

template <typename Scalar>
Vector<Scalar> bias_forward(const VectorCRef<Scalar>& y, const BiasMapT<Scalar>& bm) {
    if (y.size() != bm.M.rows()) throw ConfigError("bias_forward: y dimension mismatch");
    return bm.M.transpose() * y;
}

template <typename Scalar>
struct BiasGradsT {
    Matrix<Scalar> M;
    Vector<Scalar> y;
};

template <typename Scalar>
BiasGradsT<Scalar> bias_backward(const VectorCRef<Scalar>& grad_xhat,
                                 const VectorCRef<Scalar>& y,
                                 const BiasMapT<Scalar>& bm) {
    if (y.size() != bm.M.rows() || grad_xhat.size() != bm.M.cols())
        throw ConfigError("bias_backward: shape mismatch");
    return {y * grad_xhat.transpose(), bm.M * grad_xhat};
}

template <typename Scalar>
Vector<Scalar> project_forward(const VectorCRef<Scalar>& h,
                               const SpeechProjectionT<Scalar>& sp) {
    if (h.size() != sp.J.rows()) throw ConfigError("project_forward: h dimension mismatch");
    return sp.J.transpose() * h;
}

template <typename Scalar>
struct ProjectGradsT {
    Matrix<Scalar> J;
    Vector<Scalar> h;
};

template <typename Scalar>
ProjectGradsT<Scalar> project_backward(const VectorCRef<Scalar>& grad_hhat,
                                       const VectorCRef<Scalar>& h,
                                       const SpeechProjectionT<Scalar>& sp) {
    if (h.size() != sp.J.rows() || grad_hhat.size() != sp.J.cols())
        throw ConfigError("project_backward: shape mismatch");
    return {h * grad_hhat.transpose(), sp.J * grad_hhat};
}

}  // namespace nes
