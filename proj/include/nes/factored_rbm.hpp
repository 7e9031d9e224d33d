#pragma once

#include <cmath>
#include <utility>

#include "nes/core.hpp"

namespace nes {

/// Three-way RBM whose interaction tensor is factored into per-modality
/// filter matrices sharing a factor index: input x (Gaussian), conditioned
/// visible y (Gaussian), hidden h (binary).
template <typename Scalar = double>
struct FactoredRbmT {
    Matrix<Scalar> W_fx;  // D x F
    Matrix<Scalar> W_fy;  // M x F
    Matrix<Scalar> W_fh;  // K x F
    Vector<Scalar> bias_x;   // D
    Vector<Scalar> bias_y;   // M
    Vector<Scalar> bias_h;   // K
    Vector<Scalar> sigma_x;  // D, strictly positive
    Vector<Scalar> sigma_y;  // M, strictly positive

    Index input_dim() const { return W_fx.rows(); }
    Index visible_dim() const { return W_fy.rows(); }
    Index hidden_dim() const { return W_fh.rows(); }
    Index factor_count() const { return W_fx.cols(); }

    /// Factor matrices start as |N(0, 0.01^2)| so the nonnegativity barrier
    /// is inactive at initialization; biases zero, sigmas one.
    static FactoredRbmT random(Index input, Index visible, Index hidden, Index factors,
                               Rng& rng) {
        FactoredRbmT frbm;
        auto fill = [&rng](Matrix<Scalar>& m, Index rows, Index cols) {
            m.resize(rows, cols);
            for (Index r = 0; r < rows; ++r)
                for (Index c = 0; c < cols; ++c)
                    m(r, c) = static_cast<Scalar>(std::abs(0.01 * rng.normal()));
        };
        fill(frbm.W_fx, input, factors);
        fill(frbm.W_fy, visible, factors);
        fill(frbm.W_fh, hidden, factors);
        frbm.bias_x = Vector<Scalar>::Zero(input);
        frbm.bias_y = Vector<Scalar>::Zero(visible);
        frbm.bias_h = Vector<Scalar>::Zero(hidden);
        frbm.sigma_x = Vector<Scalar>::Ones(input);
        frbm.sigma_y = Vector<Scalar>::Ones(visible);
        return frbm;
    }
};

using FactoredRbm = FactoredRbmT<double>;

template <typename Scalar = double>
struct FactorResponsesT {
    Vector<Scalar> fx;  // F
    Vector<Scalar> fy;  // F
    Vector<Scalar> fh;  // F
};

using FactorResponses = FactorResponsesT<double>;

/// Linear filter responses of the three layers along the shared factor axis.
template <typename Scalar>
FactorResponsesT<Scalar> factor_responses(const VectorCRef<Scalar>& x,
                                          const VectorCRef<Scalar>& y,
                                          const VectorCRef<Scalar>& h,
                                          const FactoredRbmT<Scalar>& frbm) {
    if (x.size() != frbm.input_dim() || y.size() != frbm.visible_dim() ||
        h.size() != frbm.hidden_dim())
        throw ConfigError("factor_responses: shape mismatch");
    return {frbm.W_fx.transpose() * x.cwiseQuotient(frbm.sigma_x),
            frbm.W_fy.transpose() * y.cwiseQuotient(frbm.sigma_y), frbm.W_fh.transpose() * h};
}

/// E(y, h, x) = -b_h.h + |y - b_y|^2/(2 s_y^2) + |x - b_x|^2/(2 s_x^2)
///            - sum_f fx_f fy_f fh_f
template <typename Scalar>
Scalar energy3(const VectorCRef<Scalar>& x,
               const VectorCRef<Scalar>& y,
               const VectorCRef<Scalar>& h, const FactoredRbmT<Scalar>& frbm) {
    const auto resp = factor_responses(x, y, h, frbm);
    const Scalar quad_x =
        (x - frbm.bias_x).cwiseQuotient(frbm.sigma_x).squaredNorm() / Scalar(2);
    const Scalar quad_y =
        (y - frbm.bias_y).cwiseQuotient(frbm.sigma_y).squaredNorm() / Scalar(2);
    const Scalar interaction = resp.fx.cwiseProduct(resp.fy).dot(resp.fh);
    return -frbm.bias_h.dot(h) + quad_y + quad_x - interaction;
}

/// Net input of each hidden unit: dE_k = sum_f W_fh[k,f] fx_f fy_f + b_h_k.
template <typename Scalar>
Vector<Scalar> delta_e_hidden(const VectorCRef<Scalar>& x,
                              const VectorCRef<Scalar>& y,
                              const FactoredRbmT<Scalar>& frbm) {
    if (x.size() != frbm.input_dim() || y.size() != frbm.visible_dim())
        throw ConfigError("delta_e_hidden: shape mismatch");
    const Vector<Scalar> fx = frbm.W_fx.transpose() * x.cwiseQuotient(frbm.sigma_x);
    const Vector<Scalar> fy = frbm.W_fy.transpose() * y.cwiseQuotient(frbm.sigma_y);
    return frbm.W_fh * fx.cwiseProduct(fy) + frbm.bias_h;
}

/// Net input of each visible unit: dE_j = sum_f W_fy[j,f] fx_f fh_f + b_y_j.
template <typename Scalar>
Vector<Scalar> delta_e_visible(const VectorCRef<Scalar>& x,
                               const VectorCRef<Scalar>& h,
                               const FactoredRbmT<Scalar>& frbm) {
    if (x.size() != frbm.input_dim() || h.size() != frbm.hidden_dim())
        throw ConfigError("delta_e_visible: shape mismatch");
    const Vector<Scalar> fx = frbm.W_fx.transpose() * x.cwiseQuotient(frbm.sigma_x);
    const Vector<Scalar> fh = frbm.W_fh.transpose() * h;
    return frbm.W_fy * fx.cwiseProduct(fh) + frbm.bias_y;
}

/// Net input of each input unit: dE_i = sum_f W_fx[i,f] fy_f fh_f + b_x_i.
/// Used for gradient checks only; the input stays clamped during learning.
template <typename Scalar>
Vector<Scalar> delta_e_input(const VectorCRef<Scalar>& y,
                             const VectorCRef<Scalar>& h,
                             const FactoredRbmT<Scalar>& frbm) {
    if (y.size() != frbm.visible_dim() || h.size() != frbm.hidden_dim())
        throw ConfigError("delta_e_input: shape mismatch");
    const Vector<Scalar> fy = frbm.W_fy.transpose() * y.cwiseQuotient(frbm.sigma_y);
    const Vector<Scalar> fh = frbm.W_fh.transpose() * h;
    return frbm.W_fx * fy.cwiseProduct(fh) + frbm.bias_x;
}

template <typename Scalar>
Vector<Scalar> hidden_conditional3(const VectorCRef<Scalar>& x,
                                   const VectorCRef<Scalar>& y,
                                   const FactoredRbmT<Scalar>& frbm) {
    return sigmoid<Scalar>(delta_e_hidden(x, y, frbm));
}

/// p(y_j | x, h) = N(b_y_j + s_y_j sum_f W_fy[j,f] fx_f fh_f, s_y_j^2).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> visible_conditional3(
    const VectorCRef<Scalar>& x, const VectorCRef<Scalar>& h,
    const FactoredRbmT<Scalar>& frbm) {
    const Vector<Scalar> fx = frbm.W_fx.transpose() * x.cwiseQuotient(frbm.sigma_x);
    const Vector<Scalar> fh = frbm.W_fh.transpose() * h;
    Vector<Scalar> mean =
        frbm.bias_y + frbm.sigma_y.cwiseProduct(frbm.W_fy * fx.cwiseProduct(fh));
    return {std::move(mean), frbm.sigma_y};
}

template <typename Scalar = double>
struct EnergyGradsT {
    Matrix<Scalar> W_fx, W_fy, W_fh;
    Vector<Scalar> bias_x, bias_y, bias_h;
};

using EnergyGrads = EnergyGradsT<double>;

/// Negative energy gradients -dE/dtheta at a joint state (x, y, h).
template <typename Scalar>
EnergyGradsT<Scalar> energy_gradients(const VectorCRef<Scalar>& x,
                                      const VectorCRef<Scalar>& y,
                                      const VectorCRef<Scalar>& h,
                                      const FactoredRbmT<Scalar>& frbm) {
    const auto resp = factor_responses(x, y, h, frbm);
    EnergyGradsT<Scalar> g;
    g.W_fh = h * resp.fx.cwiseProduct(resp.fy).transpose();
    g.W_fy = y.cwiseQuotient(frbm.sigma_y) * resp.fx.cwiseProduct(resp.fh).transpose();
    g.W_fx = x.cwiseQuotient(frbm.sigma_x) * resp.fy.cwiseProduct(resp.fh).transpose();
    g.bias_h = h;
    g.bias_x = (x - frbm.bias_x).cwiseQuotient(frbm.sigma_x.cwiseAbs2());
    g.bias_y = (y - frbm.bias_y).cwiseQuotient(frbm.sigma_y.cwiseAbs2());
    return g;
}

template <typename Scalar = double>
struct BarrierResultT {
    Scalar penalty = 0;
    Matrix<Scalar> grad_fx, grad_fy, grad_fh;  // d(penalty)/dW, nonzero below zero
};

/// Quadratic barrier on negative factor weights:
/// penalty = (alpha/2) * sum w^2 over entries w < 0.
template <typename Scalar>
BarrierResultT<Scalar> barrier_penalty(const FactoredRbmT<Scalar>& frbm, Scalar alpha) {
    BarrierResultT<Scalar> out;
    auto apply = [&](const Matrix<Scalar>& w, Matrix<Scalar>& grad) {
        grad = w.unaryExpr([alpha](Scalar v) { return v < Scalar(0) ? alpha * v : Scalar(0); });
        out.penalty +=
            (alpha / Scalar(2)) *
            w.unaryExpr([](Scalar v) { return v < Scalar(0) ? v * v : Scalar(0); }).sum();
    };
    apply(frbm.W_fx, out.grad_fx);
    apply(frbm.W_fy, out.grad_fy);
    apply(frbm.W_fh, out.grad_fh);
    return out;
}

template <typename Scalar = double>
struct CdVelocity3 {
    Matrix<Scalar> W_fx, W_fy, W_fh;
    Vector<Scalar> bias_y, bias_h;

    static CdVelocity3 zero(Index input, Index visible, Index hidden, Index factors) {
        return {Matrix<Scalar>::Zero(input, factors), Matrix<Scalar>::Zero(visible, factors),
                Matrix<Scalar>::Zero(hidden, factors), Vector<Scalar>::Zero(visible),
                Vector<Scalar>::Zero(hidden)};
    }
};

template <typename Scalar = double>
struct CdStats3 {
    Scalar recon_error = 0;  // batch-mean squared y reconstruction error
};

/// CD-k step for the conditional model p(y | x): x stays clamped, the chain
/// alternates binary hidden samples with conditional-mean y reconstructions
/// (sampling the Gaussian units feeds multiplicative noise back into the
/// factor scales and the chain diverges). The positive phase uses hidden
/// probabilities; the negative phase uses the chain's final states. The
/// barrier gradient and weight decay act on the factor matrices only.
template <typename Scalar>
CdStats3<Scalar> cd_update3(const MatrixCRef<Scalar>& batch_x,
                            const MatrixCRef<Scalar>& batch_y,
                            FactoredRbmT<Scalar>& frbm, int k_steps, Scalar lr, Scalar momentum,
                            Scalar weight_decay, Scalar alpha, CdVelocity3<Scalar>& velocity,
                            Rng& rng) {
    const Index n = batch_x.rows();
    if (n == 0) throw DataError("cd_update3: empty batch");
    if (batch_y.rows() != n) throw DataError("cd_update3: x/y row counts disagree");
    if (batch_x.cols() != frbm.input_dim() || batch_y.cols() != frbm.visible_dim())
        throw ConfigError("cd_update3: batch width mismatch");
    if (k_steps < 1) throw ConfigError("cd_update3: k_steps must be >= 1");

    const Index kh = frbm.hidden_dim();
    const Vector<Scalar> inv_sx = frbm.sigma_x.cwiseInverse();
    const Vector<Scalar> inv_sy = frbm.sigma_y.cwiseInverse();

    // rows are per-sample factor responses
    const Matrix<Scalar> fx =
        (batch_x.array().rowwise() * inv_sx.transpose().array()).matrix() * frbm.W_fx;
    auto fy_of = [&](const Matrix<Scalar>& y) -> Matrix<Scalar> {
        return (y.array().rowwise() * inv_sy.transpose().array()).matrix() * frbm.W_fy;
    };
    auto hidden_probs = [&](const Matrix<Scalar>& fy) -> Matrix<Scalar> {
        Matrix<Scalar> a = fx.cwiseProduct(fy) * frbm.W_fh.transpose();
        a.rowwise() += frbm.bias_h.transpose();
        return a.unaryExpr([](Scalar z) { return sigmoid(z); });
    };

    const Matrix<Scalar> fy_data = fy_of(batch_y);
    const Matrix<Scalar> h_data = hidden_probs(fy_data);
    const Matrix<Scalar> fh_data = h_data * frbm.W_fh;

    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    const Matrix<Scalar> x_scaled =
        (batch_x.array().rowwise() * inv_sx.transpose().array()).matrix();
    const Matrix<Scalar> y_scaled_data =
        (batch_y.array().rowwise() * inv_sy.transpose().array()).matrix();

    const Matrix<Scalar> pos_wfh = h_data.transpose() * fx.cwiseProduct(fy_data) * inv_n;
    const Matrix<Scalar> pos_wfy =
        y_scaled_data.transpose() * fx.cwiseProduct(fh_data) * inv_n;
    const Matrix<Scalar> pos_wfx =
        x_scaled.transpose() * fy_data.cwiseProduct(fh_data) * inv_n;
    const Vector<Scalar> pos_bh = (h_data.colwise().sum() * inv_n).transpose();
    Vector<Scalar> pos_by = ((batch_y.colwise().sum() * inv_n).transpose() - frbm.bias_y)
                                .cwiseProduct(inv_sy.cwiseAbs2());

    // negative chain: h ~ p(h | y, x), then y ~ p(y | x, h), x clamped
    Matrix<Scalar> h_state(n, kh);
    Matrix<Scalar> y_state = batch_y;
    Matrix<Scalar> fy_state = fy_data;
    Scalar recon = 0;
    for (int step = 0; step < k_steps; ++step) {
        const Matrix<Scalar> h_prob = hidden_probs(fy_state);
        for (Index r = 0; r < n; ++r)
            for (Index c = 0; c < kh; ++c)
                h_state(r, c) = rng.bernoulli(static_cast<double>(h_prob(r, c))) ? 1 : 0;
        const Matrix<Scalar> fh_state = h_state * frbm.W_fh;
        Matrix<Scalar> y_mean = fx.cwiseProduct(fh_state) * frbm.W_fy.transpose();
        y_mean.array().rowwise() *= frbm.sigma_y.transpose().array();
        y_mean.rowwise() += frbm.bias_y.transpose();
        if (step == 0) recon = (batch_y - y_mean).squaredNorm() / static_cast<Scalar>(n);
        y_state = std::move(y_mean);
        fy_state = fy_of(y_state);
    }

    const Matrix<Scalar> fh_state = h_state * frbm.W_fh;
    const Matrix<Scalar> y_scaled_state =
        (y_state.array().rowwise() * inv_sy.transpose().array()).matrix();
    const Matrix<Scalar> neg_wfh = h_state.transpose() * fx.cwiseProduct(fy_state) * inv_n;
    const Matrix<Scalar> neg_wfy =
        y_scaled_state.transpose() * fx.cwiseProduct(fh_state) * inv_n;
    const Matrix<Scalar> neg_wfx =
        x_scaled.transpose() * fy_state.cwiseProduct(fh_state) * inv_n;
    const Vector<Scalar> neg_bh = (h_state.colwise().sum() * inv_n).transpose();
    Vector<Scalar> neg_by = ((y_state.colwise().sum() * inv_n).transpose() - frbm.bias_y)
                                .cwiseProduct(inv_sy.cwiseAbs2());

    const auto barrier = barrier_penalty(frbm, alpha);

    velocity.W_fh = momentum * velocity.W_fh +
                    lr * (pos_wfh - neg_wfh - weight_decay * frbm.W_fh - barrier.grad_fh);
    velocity.W_fy = momentum * velocity.W_fy +
                    lr * (pos_wfy - neg_wfy - weight_decay * frbm.W_fy - barrier.grad_fy);
    velocity.W_fx = momentum * velocity.W_fx +
                    lr * (pos_wfx - neg_wfx - weight_decay * frbm.W_fx - barrier.grad_fx);
    velocity.bias_h = momentum * velocity.bias_h + lr * (pos_bh - neg_bh);
    velocity.bias_y = momentum * velocity.bias_y + lr * (pos_by - neg_by);

    frbm.W_fh += velocity.W_fh;
    frbm.W_fy += velocity.W_fy;
    frbm.W_fx += velocity.W_fx;
    frbm.bias_h += velocity.bias_h;
    frbm.bias_y += velocity.bias_y;

    return {recon};
}

}  // namespace nes
