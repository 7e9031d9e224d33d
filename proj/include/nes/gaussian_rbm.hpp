#pragma once

#include <cmath>
#include <utility>

#include "nes/core.hpp"

namespace nes {

/// Gaussian-Bernoulli RBM: real-valued visible units with fixed per-unit
/// standard deviations, binary hidden units.
template <typename Scalar = double>
struct GaussianRbmT {
    Matrix<Scalar> W;            // D x K
    Vector<Scalar> hidden_bias;  // K
    Vector<Scalar> visible_bias; // D
    Vector<Scalar> sigma;        // D, strictly positive

    Index visible_dim() const { return W.rows(); }
    Index hidden_dim() const { return W.cols(); }

    static GaussianRbmT random(Index visible, Index hidden, Rng& rng) {
        GaussianRbmT rbm;
        rbm.W.resize(visible, hidden);
        for (Index j = 0; j < visible; ++j)
            for (Index k = 0; k < hidden; ++k)
                rbm.W(j, k) = static_cast<Scalar>(0.01 * rng.normal());
        rbm.hidden_bias = Vector<Scalar>::Zero(hidden);
        rbm.visible_bias = Vector<Scalar>::Zero(visible);
        rbm.sigma = Vector<Scalar>::Ones(visible);
        return rbm;
    }
};

using GaussianRbm = GaussianRbmT<double>;

template <typename Scalar>
void check_binary(const VectorCRef<Scalar>& h) {
    for (Index k = 0; k < h.size(); ++k)
        if (h[k] != Scalar(0) && h[k] != Scalar(1))
            throw ContractViolation("hidden state must be binary");
}

/// E(x, h) = sum_j (x_j - b_j)^2 / (2 s_j^2) - sum_jk (x_j/s_j) W_jk h_k
///         - sum_k c_k h_k
template <typename Scalar>
Scalar energy(const VectorCRef<Scalar>& x,
              const VectorCRef<Scalar>& h, const GaussianRbmT<Scalar>& rbm) {
    if (x.size() != rbm.visible_dim() || h.size() != rbm.hidden_dim())
        throw ConfigError("energy: shape mismatch");
    check_binary<Scalar>(h);
    const Vector<Scalar> scaled = x.cwiseQuotient(rbm.sigma);
    const Scalar quad =
        (x - rbm.visible_bias).cwiseQuotient(rbm.sigma).squaredNorm() / Scalar(2);
    return quad - scaled.dot(rbm.W * h) - rbm.hidden_bias.dot(h);
}

/// Net input of each hidden unit given the visible vector.
template <typename Scalar>
Vector<Scalar> hidden_input(const VectorCRef<Scalar>& x,
                            const GaussianRbmT<Scalar>& rbm) {
    if (x.size() != rbm.visible_dim()) throw ConfigError("hidden_input: shape mismatch");
    return rbm.W.transpose() * x.cwiseQuotient(rbm.sigma) + rbm.hidden_bias;
}

/// p(h_k = 1 | x) = sigmoid(sum_j (x_j/s_j) W_jk + c_k)
template <typename Scalar>
Vector<Scalar> hidden_conditional(const VectorCRef<Scalar>& x,
                                  const GaussianRbmT<Scalar>& rbm) {
    return sigmoid<Scalar>(hidden_input(x, rbm));
}

/// p(x_j | h) = N(b_j + s_j * sum_k W_jk h_k, s_j^2); returns means and
/// standard deviations.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> visible_conditional(
    const VectorCRef<Scalar>& h, const GaussianRbmT<Scalar>& rbm) {
    if (h.size() != rbm.hidden_dim()) throw ConfigError("visible_conditional: shape mismatch");
    Vector<Scalar> mean = rbm.visible_bias + rbm.sigma.cwiseProduct(rbm.W * h);
    return {std::move(mean), rbm.sigma};
}

template <typename Scalar>
Vector<Scalar> sample_hidden(const VectorCRef<Scalar>& x,
                             const GaussianRbmT<Scalar>& rbm, Rng& rng) {
    const Vector<Scalar> p = hidden_conditional(x, rbm);
    Vector<Scalar> h(p.size());
    for (Index k = 0; k < p.size(); ++k)
        h[k] = rng.bernoulli(static_cast<double>(p[k])) ? Scalar(1) : Scalar(0);
    return h;
}

template <typename Scalar>
Vector<Scalar> sample_visible(const VectorCRef<Scalar>& h,
                              const GaussianRbmT<Scalar>& rbm, Rng& rng) {
    auto [mean, stddev] = visible_conditional(h, rbm);
    for (Index j = 0; j < mean.size(); ++j)
        mean[j] += stddev[j] * static_cast<Scalar>(rng.normal());
    return mean;
}

/// F(x) = -log sum_h exp(-E(x, h)), computed analytically.
template <typename Scalar>
Scalar free_energy(const VectorCRef<Scalar>& x, const GaussianRbmT<Scalar>& rbm) {
    const Scalar quad =
        (x - rbm.visible_bias).cwiseQuotient(rbm.sigma).squaredNorm() / Scalar(2);
    const Vector<Scalar> dE = hidden_input(x, rbm);
    Scalar softplus_sum = 0;
    for (Index k = 0; k < dE.size(); ++k) {
        const Scalar z = dE[k];
        softplus_sum += std::max(z, Scalar(0)) + std::log1p(std::exp(-std::abs(z)));
    }
    return quad - softplus_sum;
}

template <typename Scalar = double>
struct CdVelocity {
    Matrix<Scalar> W;
    Vector<Scalar> hidden_bias;
    Vector<Scalar> visible_bias;

    static CdVelocity zero(Index visible, Index hidden) {
        return {Matrix<Scalar>::Zero(visible, hidden), Vector<Scalar>::Zero(hidden),
                Vector<Scalar>::Zero(visible)};
    }
};

template <typename Scalar = double>
struct CdStats {
    Scalar recon_error = 0;  // batch-mean squared reconstruction error
};

/// One CD-k parameter update on a batch of visible rows. The data-side
/// hidden statistic uses probabilities; the chain drives binary hidden
/// samples while visible states follow their conditional means. Weight
/// decay applies to W only.
template <typename Scalar>
CdStats<Scalar> cd_update(const MatrixCRef<Scalar>& batch,
                          GaussianRbmT<Scalar>& rbm, int k_steps,
                          Scalar lr, Scalar momentum, Scalar weight_decay,
                          CdVelocity<Scalar>& velocity, Rng& rng) {
    const Index n = batch.rows();
    const Index d = rbm.visible_dim();
    const Index kh = rbm.hidden_dim();
    if (n == 0) throw DataError("cd_update: empty batch");
    if (batch.cols() != d) throw ConfigError("cd_update: batch width mismatch");
    if (k_steps < 1) throw ConfigError("cd_update: k_steps must be >= 1");

    const Vector<Scalar> inv_sigma = rbm.sigma.cwiseInverse();
    const Vector<Scalar> inv_sigma2 = inv_sigma.cwiseProduct(inv_sigma);
    auto hidden_probs = [&](const Matrix<Scalar>& v) -> Matrix<Scalar> {
        Matrix<Scalar> a = (v.array().rowwise() * inv_sigma.transpose().array()).matrix() * rbm.W;
        a.rowwise() += rbm.hidden_bias.transpose();
        return a.unaryExpr([](Scalar z) { return sigmoid(z); });
    };

    const Matrix<Scalar> h_data = hidden_probs(batch);

    Matrix<Scalar> h_state(n, kh);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < kh; ++c)
            h_state(r, c) = rng.bernoulli(static_cast<double>(h_data(r, c))) ? 1 : 0;

    Matrix<Scalar> v_state(n, d);
    Scalar recon = 0;
    for (int step = 0; step < k_steps; ++step) {
        v_state = h_state * rbm.W.transpose();
        v_state.array().rowwise() *= rbm.sigma.transpose().array();
        v_state.rowwise() += rbm.visible_bias.transpose();
        if (step == 0) recon = (batch - v_state).squaredNorm() / static_cast<Scalar>(n);
        const Matrix<Scalar> h_prob = hidden_probs(v_state);
        for (Index r = 0; r < n; ++r)
            for (Index c = 0; c < kh; ++c)
                h_state(r, c) = rng.bernoulli(static_cast<double>(h_prob(r, c))) ? 1 : 0;
    }

    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    const Matrix<Scalar> scaled_data =
        (batch.array().rowwise() * inv_sigma.transpose().array()).matrix();
    const Matrix<Scalar> scaled_model =
        (v_state.array().rowwise() * inv_sigma.transpose().array()).matrix();

    const Matrix<Scalar> grad_w =
        (scaled_data.transpose() * h_data - scaled_model.transpose() * h_state) * inv_n;
    const Vector<Scalar> grad_bh =
        ((h_data.colwise().sum() - h_state.colwise().sum()) * inv_n).transpose();
    Vector<Scalar> grad_bx =
        ((batch.colwise().sum() - v_state.colwise().sum()) * inv_n).transpose();
    grad_bx = grad_bx.cwiseProduct(inv_sigma2);

    velocity.W = momentum * velocity.W + lr * (grad_w - weight_decay * rbm.W);
    velocity.hidden_bias = momentum * velocity.hidden_bias + lr * grad_bh;
    velocity.visible_bias = momentum * velocity.visible_bias + lr * grad_bx;
    rbm.W += velocity.W;
    rbm.hidden_bias += velocity.hidden_bias;
    rbm.visible_bias += velocity.visible_bias;

    return {recon};
}

}  // namespace nes
