#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "nes/core.hpp"
#include "nes/factored_rbm.hpp"
#include "nes/gaussian_rbm.hpp"
#include "nes/layers.hpp"
#include "nes/trial.hpp"

namespace nes {

enum class Variant { I, B, G };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::I: return "nes-i";
        case Variant::B: return "nes-b";
        case Variant::G: return "nes-g";
    }
    return "?";
}

inline Variant parse_variant(const std::string& name) {
    if (name == "nes-i") return Variant::I;
    if (name == "nes-b") return Variant::B;
    if (name == "nes-g") return Variant::G;
    throw ConfigError("unknown variant '" + name + "' (expected nes-i, nes-b, or nes-g)");
}

template <typename Scalar = double>
struct SoftmaxHeadT {
    Matrix<Scalar> W;     // L x n_classes
    Vector<Scalar> bias;  // n_classes
};

/// One of the three EEG-speech networks: context transforms feeding an RBM
/// core whose mean-field hidden state is projected into the speech feature
/// space, with an optional classification head.
template <typename Scalar = double>
struct NesModelT {
    Variant variant = Variant::I;
    ContextTransformT<Scalar> context;
    BiasMapT<Scalar> bias_map;          // only for B and G
    SpeechProjectionT<Scalar> projection;
    GaussianRbmT<Scalar> gaussian;      // core for I and B
    FactoredRbmT<Scalar> factored;      // core for G
    SoftmaxHeadT<Scalar> softmax;       // empty when absent

    bool gated() const { return variant == Variant::G; }
    bool uses_bias_map() const { return variant != Variant::I; }
    bool has_softmax() const { return softmax.W.size() > 0; }

    Index context_count() const { return context.context_count(); }
    Index feature_dim() const { return context.dim(); }                  // D
    Index spoken_dim() const { return bias_map.M.rows(); }               // M
    Index hidden_dim() const {
        return gated() ? factored.hidden_dim() : gaussian.hidden_dim();  // K
    }
    Index output_dim() const { return projection.J.cols(); }             // L
    Index class_count() const { return softmax.W.cols(); }
};

using NesModel = NesModelT<double>;

struct ModelShapes {
    Index n_ctx = 0;
    Index feature_dim = 50;  // D
    Index spoken_dim = 0;    // M; defaults to feature_dim for B and G
    Index hidden_dim = 50;   // K
    Index output_dim = 0;    // L; defaults to feature_dim
    Index factor_count = 0;  // F; defaults to hidden_dim
    Index n_classes = 0;     // 0 means no classification head
};

template <typename Scalar = double>
NesModelT<Scalar> make_model(Variant variant, ModelShapes shapes, std::uint64_t seed) {
    if (shapes.n_ctx < 1) throw ConfigError("make_model: need at least one context channel");
    if (shapes.feature_dim < 1 || shapes.hidden_dim < 1)
        throw ConfigError("make_model: dimensions must be positive");
    if (shapes.output_dim == 0) shapes.output_dim = shapes.feature_dim;
    if (shapes.spoken_dim == 0) shapes.spoken_dim = shapes.feature_dim;
    if (shapes.factor_count == 0) shapes.factor_count = shapes.hidden_dim;

    Rng rng(mix_seed(seed, 0x4d4f44454cull));  // "MODEL"
    NesModelT<Scalar> model;
    model.variant = variant;
    model.context = ContextTransformT<Scalar>::random(shapes.n_ctx, shapes.feature_dim, rng);
    if (variant != Variant::I)
        model.bias_map = BiasMapT<Scalar>::random(shapes.spoken_dim, shapes.feature_dim, rng);
    model.projection =
        SpeechProjectionT<Scalar>::random(shapes.hidden_dim, shapes.output_dim, rng);
    if (variant == Variant::G)
        model.factored = FactoredRbmT<Scalar>::random(shapes.feature_dim, shapes.spoken_dim,
                                                      shapes.hidden_dim, shapes.factor_count, rng);
    else
        model.gaussian = GaussianRbmT<Scalar>::random(shapes.feature_dim, shapes.hidden_dim, rng);
    if (shapes.n_classes > 0) {
        model.softmax.W = Matrix<Scalar>::Zero(shapes.output_dim, shapes.n_classes);
        model.softmax.bias = Vector<Scalar>::Zero(shapes.n_classes);
    }
    return model;
}

template <typename Scalar>
Vector<Scalar> softmax_probs(const Vector<Scalar>& logits) {
    const Scalar peak = logits.maxCoeff();
    Vector<Scalar> p = (logits.array() - peak).exp();
    p /= p.sum();
    return p;
}

template <typename Scalar = double>
struct ForwardResultT {
    Vector<Scalar> xhat;        // D, extracted feature
    Vector<Scalar> hidden;      // K, mean-field hidden probabilities
    Vector<Scalar> recovered;   // L, projected speech feature
    Vector<Scalar> class_probs; // n_classes, empty without a head
};

using ForwardResult = ForwardResultT<double>;

template <typename Scalar>
ForwardResultT<Scalar> forward(const NesModelT<Scalar>& model, const FeatureTuple& tuple) {
    ForwardResultT<Scalar> out;
    const Matrix<Scalar> xs = tuple.xs.template cast<Scalar>();
    out.xhat = context_forward<Scalar>(xs, model.context);
    Vector<Scalar> y;
    if (model.uses_bias_map() || model.gated()) {
        if (tuple.y.size() == 0)
            throw ConfigError("forward: variant requires the spoken-EEG vector y");
        y = tuple.y.template cast<Scalar>();
    }
    if (model.uses_bias_map()) out.xhat += bias_forward<Scalar>(y, model.bias_map);

    if (model.gated())
        out.hidden = hidden_conditional3<Scalar>(out.xhat, y, model.factored);
    else
        out.hidden = hidden_conditional<Scalar>(out.xhat, model.gaussian);

    out.recovered = project_forward<Scalar>(out.hidden, model.projection);
    if (model.has_softmax())
        out.class_probs =
            softmax_probs<Scalar>(model.softmax.W.transpose() * out.recovered + model.softmax.bias);
    return out;
}

/// Projected output rescaled to [0, 1]; a constant output maps to zeros.
template <typename Scalar>
Vector<Scalar> recover_envelope(const NesModelT<Scalar>& model, const FeatureTuple& tuple) {
    Vector<Scalar> hhat = forward(model, tuple).recovered;
    const Scalar lo = hhat.minCoeff();
    const Scalar hi = hhat.maxCoeff();
    if (hi - lo <= Scalar(0)) return Vector<Scalar>::Zero(hhat.size());
    return (hhat.array() - lo) / (hi - lo);
}

/// Most probable class and the full probability vector.
template <typename Scalar>
std::pair<int, Vector<Scalar>> classify(const NesModelT<Scalar>& model,
                                        const FeatureTuple& tuple) {
    if (!model.has_softmax()) throw ConfigError("classify: model has no softmax head");
    Vector<Scalar> probs = forward(model, tuple).class_probs;
    Index best = 0;
    probs.maxCoeff(&best);  // ties resolve to the lowest index
    return {static_cast<int>(best), std::move(probs)};
}

struct TrainConfig {
    int epochs = 100;
    Index batch_size = 2000;
    double lr = 0.1;  // the gated variant trains at 0.02 by default
    double momentum_start = 0.5;
    double momentum_end = 0.9;
    int momentum_ramp_epochs = 30;
    double wd_context = 1e-4;         // context transforms F
    double wd_representation = 1e-5;  // projection J
    double wd_other = 1e-4;           // bias map, core weights, softmax
    int cd_steps = 1;
    double cd_lr_scale = 1.0;  // CD step size relative to lr
    double alpha = 0.0;        // nonnegativity barrier strength (gated core)
    std::uint64_t seed = 0;

    static TrainConfig defaults_for(Variant v) {
        TrainConfig cfg;
        if (v == Variant::G) cfg.lr = 0.02;
        return cfg;
    }
};

/// Momentum schedule: linear ramp from start to end over the first
/// `momentum_ramp_epochs`, constant afterwards.
inline double momentum_at(int epoch, const TrainConfig& cfg) {
    if (cfg.momentum_ramp_epochs <= 0) return cfg.momentum_end;
    const double t = std::min(1.0, static_cast<double>(epoch) /
                                       static_cast<double>(cfg.momentum_ramp_epochs));
    return cfg.momentum_start + (cfg.momentum_end - cfg.momentum_start) * t;
}

template <typename Scalar = double>
struct SupervisedGradsT {
    std::vector<Matrix<Scalar>> context;  // per F matrix
    Matrix<Scalar> bias_map;              // M
    Matrix<Scalar> projection;            // J
    Matrix<Scalar> core_w;                // W (Gaussian) or W_fh (gated)
    Vector<Scalar> core_bias_h;
    Matrix<Scalar> softmax_w;
    Vector<Scalar> softmax_bias;
    Scalar loss = 0;

    static SupervisedGradsT zero(const NesModelT<Scalar>& model) {
        SupervisedGradsT g;
        g.context.reserve(model.context.F.size());
        for (const auto& f : model.context.F)
            g.context.push_back(Matrix<Scalar>::Zero(f.rows(), f.cols()));
        if (model.uses_bias_map())
            g.bias_map = Matrix<Scalar>::Zero(model.bias_map.M.rows(), model.bias_map.M.cols());
        g.projection =
            Matrix<Scalar>::Zero(model.projection.J.rows(), model.projection.J.cols());
        if (model.gated())
            g.core_w = Matrix<Scalar>::Zero(model.factored.W_fh.rows(),
                                            model.factored.W_fh.cols());
        else
            g.core_w = Matrix<Scalar>::Zero(model.gaussian.W.rows(), model.gaussian.W.cols());
        g.core_bias_h = Vector<Scalar>::Zero(model.hidden_dim());
        if (model.has_softmax()) {
            g.softmax_w = Matrix<Scalar>::Zero(model.softmax.W.rows(), model.softmax.W.cols());
            g.softmax_bias = Vector<Scalar>::Zero(model.softmax.bias.size());
        }
        return g;
    }
};

using SupervisedGrads = SupervisedGradsT<double>;

/// Loss gradients of the deterministic forward path (mean-field hidden
/// state) averaged over the given tuples. Cross-entropy when a softmax head
/// is present, squared envelope error otherwise. For the gated core only the
/// hidden-side factor matrix receives supervised gradients.
template <typename Scalar>
SupervisedGradsT<Scalar> supervised_gradients(const NesModelT<Scalar>& model,
                                              const std::vector<FeatureTuple>& tuples,
                                              const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DataError("supervised_gradients: empty batch");
    SupervisedGradsT<Scalar> grads = SupervisedGradsT<Scalar>::zero(model);
    const bool classify_mode = model.has_softmax();

    for (std::size_t idx : indices) {
        const FeatureTuple& tuple = tuples[idx];
        const Matrix<Scalar> xs = tuple.xs.template cast<Scalar>();
        Vector<Scalar> y;
        if (model.uses_bias_map()) {
            if (tuple.y.size() == 0)
                throw ConfigError("supervised_gradients: variant requires y");
            y = tuple.y.template cast<Scalar>();
        }

        Vector<Scalar> xhat = context_forward<Scalar>(xs, model.context);
        if (model.uses_bias_map()) xhat += bias_forward<Scalar>(y, model.bias_map);

        Vector<Scalar> net, fx, fy;
        if (model.gated()) {
            fx = model.factored.W_fx.transpose() * xhat.cwiseQuotient(model.factored.sigma_x);
            fy = model.factored.W_fy.transpose() * y.cwiseQuotient(model.factored.sigma_y);
            net = model.factored.W_fh * fx.cwiseProduct(fy) + model.factored.bias_h;
        } else {
            net = hidden_input<Scalar>(xhat, model.gaussian);
        }
        const Vector<Scalar> hidden = sigmoid<Scalar>(net);
        const Vector<Scalar> hhat = project_forward<Scalar>(hidden, model.projection);

        Vector<Scalar> grad_hhat;
        if (classify_mode) {
            if (tuple.label_index < 0)
                throw DataError("supervised_gradients: tuple lacks a label index");
            const Vector<Scalar> probs =
                softmax_probs<Scalar>(model.softmax.W.transpose() * hhat + model.softmax.bias);
            grads.loss += -std::log(std::max(probs[tuple.label_index], Scalar(1e-300)));
            Vector<Scalar> grad_logits = probs;
            grad_logits[tuple.label_index] -= Scalar(1);
            grads.softmax_w.noalias() += hhat * grad_logits.transpose();
            grads.softmax_bias += grad_logits;
            grad_hhat = model.softmax.W * grad_logits;
        } else {
            const Vector<Scalar> target = tuple.target.template cast<Scalar>();
            if (target.size() != hhat.size())
                throw ConfigError("supervised_gradients: target length mismatch");
            grads.loss += (hhat - target).squaredNorm();
            grad_hhat = Scalar(2) * (hhat - target);
        }

        auto proj = project_backward<Scalar>(grad_hhat, hidden, model.projection);
        grads.projection += proj.J;
        const Vector<Scalar> grad_net =
            proj.h.cwiseProduct(hidden.cwiseProduct(Vector<Scalar>::Ones(hidden.size()) - hidden));

        Vector<Scalar> grad_xhat;
        if (model.gated()) {
            grads.core_w.noalias() += grad_net * fx.cwiseProduct(fy).transpose();
            grads.core_bias_h += grad_net;
            const Vector<Scalar> grad_fx =
                (model.factored.W_fh.transpose() * grad_net).cwiseProduct(fy);
            grad_xhat =
                (model.factored.W_fx * grad_fx).cwiseQuotient(model.factored.sigma_x);
        } else {
            grads.core_w.noalias() +=
                xhat.cwiseQuotient(model.gaussian.sigma) * grad_net.transpose();
            grads.core_bias_h += grad_net;
            grad_xhat = (model.gaussian.W * grad_net).cwiseQuotient(model.gaussian.sigma);
        }

        auto ctx = context_backward<Scalar>(grad_xhat, xs, model.context);
        for (std::size_t i = 0; i < grads.context.size(); ++i) grads.context[i] += ctx.F[i];
        if (model.uses_bias_map()) grads.bias_map.noalias() += y * grad_xhat.transpose();
    }

    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(indices.size());
    for (auto& g : grads.context) g *= inv_n;
    if (model.uses_bias_map()) grads.bias_map *= inv_n;
    grads.projection *= inv_n;
    grads.core_w *= inv_n;
    grads.core_bias_h *= inv_n;
    if (classify_mode) {
        grads.softmax_w *= inv_n;
        grads.softmax_bias *= inv_n;
    }
    grads.loss *= inv_n;
    return grads;
}

/// Anchors the core's Gaussian units to the features it will actually see:
/// visible biases move to the per-dimension means of the context output (and
/// of y for the gated core) and the standard deviations to their spreads.
/// Without this the first CD updates run against reconstructions at the
/// wrong scale and the hidden units saturate. Run once between construction
/// and training; the values stay constant afterwards.
template <typename Scalar>
void calibrate_core(NesModelT<Scalar>& model, const std::vector<FeatureTuple>& tuples,
                    Scalar floor = Scalar(1e-3)) {
    if (tuples.size() < 2)
        throw DataError("calibrate_core: need at least two tuples to estimate spreads");
    const Index n = static_cast<Index>(tuples.size());

    Matrix<Scalar> xhat_rows(n, model.feature_dim());
    Matrix<Scalar> y_rows;
    if (model.uses_bias_map()) y_rows.resize(n, model.spoken_dim());
    for (Index r = 0; r < n; ++r) {
        const FeatureTuple& tuple = tuples[static_cast<std::size_t>(r)];
        const Matrix<Scalar> xs = tuple.xs.template cast<Scalar>();
        Vector<Scalar> xhat = context_forward<Scalar>(xs, model.context);
        if (model.uses_bias_map()) {
            if (tuple.y.size() == 0) throw ConfigError("calibrate_sigma: variant requires y");
            const Vector<Scalar> y = tuple.y.template cast<Scalar>();
            xhat += bias_forward<Scalar>(y, model.bias_map);
            y_rows.row(r) = y.transpose();
        }
        xhat_rows.row(r) = xhat.transpose();
    }

    auto column_stats = [&](const Matrix<Scalar>& rows, Vector<Scalar>& mean_out,
                            Vector<Scalar>& sigma_out) {
        mean_out.resize(rows.cols());
        sigma_out.resize(rows.cols());
        for (Index c = 0; c < rows.cols(); ++c) {
            const Scalar mean = rows.col(c).mean();
            const Scalar var = (rows.col(c).array() - mean).square().mean();
            mean_out[c] = mean;
            // scale-aware floor so near-constant dimensions cannot produce
            // huge scaled inputs
            sigma_out[c] = std::max({std::sqrt(var), floor, Scalar(0.05) * std::abs(mean)});
        }
    };

    if (model.gated()) {
        column_stats(xhat_rows, model.factored.bias_x, model.factored.sigma_x);
        column_stats(y_rows, model.factored.bias_y, model.factored.sigma_y);
    } else {
        column_stats(xhat_rows, model.gaussian.visible_bias, model.gaussian.sigma);
    }
}

struct EpochStats {
    int epoch = 0;
    double recon_error = 0;  // unsupervised monitoring
    double loss = 0;         // supervised objective
};

template <typename Scalar = double>
struct TrainResultT {
    std::vector<EpochStats> history;
};

using TrainResult = TrainResultT<double>;

/// Joint training: per batch, one CD update of the core followed by one
/// supervised step through the mean-field forward path. Deterministic under
/// the config seed.
template <typename Scalar>
TrainResultT<Scalar> train_joint(NesModelT<Scalar>& model,
                                 const std::vector<FeatureTuple>& tuples,
                                 const TrainConfig& cfg) {
    if (tuples.empty()) throw DataError("train_joint: empty dataset");
    if (cfg.batch_size < 1) throw ConfigError("train_joint: batch_size must be >= 1");
    if (cfg.epochs < 0) throw ConfigError("train_joint: epochs must be >= 0");

    Rng shuffle_rng = Rng(cfg.seed).fork(1);
    Rng sample_rng = Rng(cfg.seed).fork(2);

    const Scalar lr = static_cast<Scalar>(cfg.lr);
    const Scalar cd_lr = static_cast<Scalar>(cfg.lr * cfg.cd_lr_scale);
    CdVelocity<Scalar> cd_vel;
    CdVelocity3<Scalar> cd_vel3;
    if (model.gated())
        cd_vel3 = CdVelocity3<Scalar>::zero(model.factored.input_dim(),
                                            model.factored.visible_dim(),
                                            model.factored.hidden_dim(),
                                            model.factored.factor_count());
    else
        cd_vel = CdVelocity<Scalar>::zero(model.gaussian.visible_dim(),
                                          model.gaussian.hidden_dim());
    SupervisedGradsT<Scalar> vel = SupervisedGradsT<Scalar>::zero(model);

    std::vector<std::size_t> order(tuples.size());
    std::iota(order.begin(), order.end(), std::size_t(0));

    TrainResultT<Scalar> result;
    result.history.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Scalar momentum = static_cast<Scalar>(momentum_at(epoch, cfg));
        shuffle_rng.shuffle(order);

        double recon_sum = 0, loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(stop));

            // forward the feature layers to build the core's visible batch
            Matrix<Scalar> xhat_rows(static_cast<Index>(batch.size()), model.feature_dim());
            Matrix<Scalar> y_rows;
            if (model.uses_bias_map())
                y_rows.resize(static_cast<Index>(batch.size()), model.spoken_dim());
            for (std::size_t r = 0; r < batch.size(); ++r) {
                const FeatureTuple& tuple = tuples[batch[r]];
                const Matrix<Scalar> xs = tuple.xs.template cast<Scalar>();
                Vector<Scalar> xhat = context_forward<Scalar>(xs, model.context);
                if (model.uses_bias_map()) {
                    if (tuple.y.size() == 0)
                        throw ConfigError("train_joint: variant requires y");
                    const Vector<Scalar> y = tuple.y.template cast<Scalar>();
                    xhat += bias_forward<Scalar>(y, model.bias_map);
                    y_rows.row(static_cast<Index>(r)) = y.transpose();
                }
                xhat_rows.row(static_cast<Index>(r)) = xhat.transpose();
            }

            if (model.gated()) {
                auto stats = cd_update3<Scalar>(xhat_rows, y_rows, model.factored, cfg.cd_steps,
                                                cd_lr, momentum,
                                                static_cast<Scalar>(cfg.wd_other),
                                                static_cast<Scalar>(cfg.alpha), cd_vel3,
                                                sample_rng);
                recon_sum += static_cast<double>(stats.recon_error);
            } else {
                auto stats = cd_update<Scalar>(xhat_rows, model.gaussian, cfg.cd_steps, cd_lr,
                                               momentum, static_cast<Scalar>(cfg.wd_other),
                                               cd_vel, sample_rng);
                recon_sum += static_cast<double>(stats.recon_error);
            }

            auto grads = supervised_gradients(model, tuples, batch);
            loss_sum += static_cast<double>(grads.loss);
            if (!std::isfinite(static_cast<double>(grads.loss)))
                throw DataError("train_joint: loss diverged at epoch " + std::to_string(epoch));

            const Scalar wd_ctx = static_cast<Scalar>(cfg.wd_context);
            const Scalar wd_rep = static_cast<Scalar>(cfg.wd_representation);
            const Scalar wd_other = static_cast<Scalar>(cfg.wd_other);
            for (std::size_t i = 0; i < model.context.F.size(); ++i) {
                vel.context[i] = momentum * vel.context[i] -
                                 lr * (grads.context[i] + wd_ctx * model.context.F[i]);
                model.context.F[i] += vel.context[i];
            }
            if (model.uses_bias_map()) {
                vel.bias_map =
                    momentum * vel.bias_map - lr * (grads.bias_map + wd_other * model.bias_map.M);
                model.bias_map.M += vel.bias_map;
            }
            vel.projection = momentum * vel.projection -
                             lr * (grads.projection + wd_rep * model.projection.J);
            model.projection.J += vel.projection;

            // core hidden side; CD already applies decay to the core weights
            vel.core_w = momentum * vel.core_w - lr * grads.core_w;
            vel.core_bias_h = momentum * vel.core_bias_h - lr * grads.core_bias_h;
            if (model.gated()) {
                model.factored.W_fh += vel.core_w;
                model.factored.bias_h += vel.core_bias_h;
            } else {
                model.gaussian.W += vel.core_w;
                model.gaussian.hidden_bias += vel.core_bias_h;
            }

            if (model.has_softmax()) {
                vel.softmax_w = momentum * vel.softmax_w -
                                lr * (grads.softmax_w + wd_other * model.softmax.W);
                vel.softmax_bias = momentum * vel.softmax_bias - lr * grads.softmax_bias;
                model.softmax.W += vel.softmax_w;
                model.softmax.bias += vel.softmax_bias;
            }
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.recon_error = recon_sum / static_cast<double>(std::max<std::size_t>(1, batches));
        stats.loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, batches));
        result.history.push_back(stats);
    }
    return result;
}

}  // namespace nes
