#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nes/model.hpp"

namespace nes {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

namespace detail {

inline double fd_slope(double& slot, const std::function<double()>& f, double eps = 1e-5) {
    const double saved = slot;
    slot = saved + eps;
    const double plus = f();
    slot = saved - eps;
    const double minus = f();
    slot = saved;
    return (plus - minus) / (2.0 * eps);
}

inline double fd_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-10});
    return std::abs(analytic - numeric) / denom;
}

inline double matrix_fd_worst(Matrixd& param, const Matrixd& analytic,
                              const std::function<double()>& f) {
    double worst = 0.0;
    for (Index r = 0; r < param.rows(); ++r)
        for (Index c = 0; c < param.cols(); ++c)
            worst = std::max(worst, fd_rel_err(analytic(r, c), fd_slope(param(r, c), f)));
    return worst;
}

inline double vector_fd_worst(Vectord& param, const Vectord& analytic,
                              const std::function<double()>& f) {
    double worst = 0.0;
    for (Index i = 0; i < param.size(); ++i)
        worst = std::max(worst, fd_rel_err(analytic[i], fd_slope(param[i], f)));
    return worst;
}

}  // namespace detail

/// Central-difference validation of the factored energy gradients over
/// random instances. Entries report the worst relative error per parameter
/// block.
inline std::vector<GradCheckEntry> gradcheck_energy(Index input_dim, Index visible_dim,
                                                    Index hidden_dim, Index factor_count,
                                                    int instances, std::uint64_t seed,
                                                    double tolerance = 1e-6) {
    Rng rng = Rng(seed).fork(0x47434845ull);
    std::vector<GradCheckEntry> table = {
        {"energy3/W_fx", 0, tolerance, false}, {"energy3/W_fy", 0, tolerance, false},
        {"energy3/W_fh", 0, tolerance, false}, {"energy3/bias_x", 0, tolerance, false},
        {"energy3/bias_y", 0, tolerance, false}, {"energy3/bias_h", 0, tolerance, false}};

    for (int rep = 0; rep < instances; ++rep) {
        FactoredRbm frbm;
        auto fill = [&rng](Matrixd& m, Index rows, Index cols) {
            m.resize(rows, cols);
            for (Index i = 0; i < m.size(); ++i) m.data()[i] = 0.5 * rng.normal();
        };
        fill(frbm.W_fx, input_dim, factor_count);
        fill(frbm.W_fy, visible_dim, factor_count);
        fill(frbm.W_fh, hidden_dim, factor_count);
        frbm.bias_x.resize(input_dim);
        frbm.bias_y.resize(visible_dim);
        frbm.bias_h.resize(hidden_dim);
        for (Index i = 0; i < input_dim; ++i) frbm.bias_x[i] = 0.3 * rng.normal();
        for (Index i = 0; i < visible_dim; ++i) frbm.bias_y[i] = 0.3 * rng.normal();
        for (Index i = 0; i < hidden_dim; ++i) frbm.bias_h[i] = 0.3 * rng.normal();
        frbm.sigma_x = Vectord::Ones(input_dim);
        frbm.sigma_y = Vectord::Ones(visible_dim);
        for (Index i = 0; i < input_dim; ++i) frbm.sigma_x[i] += 0.3 * std::abs(rng.normal());
        for (Index i = 0; i < visible_dim; ++i) frbm.sigma_y[i] += 0.3 * std::abs(rng.normal());

        Vectord x(input_dim), y(visible_dim), h(hidden_dim);
        for (Index i = 0; i < input_dim; ++i) x[i] = rng.normal();
        for (Index i = 0; i < visible_dim; ++i) y[i] = rng.normal();
        for (Index i = 0; i < hidden_dim; ++i) h[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;

        const auto grads = energy_gradients(x, y, h, frbm);
        auto loss = [&]() { return energy3(x, y, h, frbm); };
        // energy_gradients returns -dE/dtheta
        table[0].max_rel_err = std::max(
            table[0].max_rel_err, detail::matrix_fd_worst(frbm.W_fx, (-grads.W_fx).eval(), loss));
        table[1].max_rel_err = std::max(
            table[1].max_rel_err, detail::matrix_fd_worst(frbm.W_fy, (-grads.W_fy).eval(), loss));
        table[2].max_rel_err = std::max(
            table[2].max_rel_err, detail::matrix_fd_worst(frbm.W_fh, (-grads.W_fh).eval(), loss));
        table[3].max_rel_err =
            std::max(table[3].max_rel_err,
                     detail::vector_fd_worst(frbm.bias_x, (-grads.bias_x).eval(), loss));
        table[4].max_rel_err =
            std::max(table[4].max_rel_err,
                     detail::vector_fd_worst(frbm.bias_y, (-grads.bias_y).eval(), loss));
        table[5].max_rel_err =
            std::max(table[5].max_rel_err,
                     detail::vector_fd_worst(frbm.bias_h, (-grads.bias_h).eval(), loss));
    }
    for (auto& entry : table) entry.pass = entry.max_rel_err < entry.tolerance;
    return table;
}

/// Central-difference validation of the supervised backward path for one
/// variant, with the envelope loss and (when `n_classes > 0`) the
/// cross-entropy loss.
inline std::vector<GradCheckEntry> gradcheck_model(Variant variant, ModelShapes shapes,
                                                   int instances, std::uint64_t seed,
                                                   double tolerance = 1e-5) {
    Rng rng = Rng(seed).fork(0x4d434845ull);
    std::vector<GradCheckEntry> table;
    const bool with_head = shapes.n_classes > 0;

    auto run_loss_mode = [&](bool head_mode) {
        const std::string prefix =
            std::string(variant_name(variant)) + (head_mode ? "/xent" : "/mse");
        std::vector<GradCheckEntry> local;
        auto entry = [&](const std::string& name) {
            local.push_back({prefix + "/" + name, 0, tolerance, false});
            return local.size() - 1;
        };
        const std::size_t e_ctx = entry("context");
        const std::size_t e_bias =
            variant != Variant::I ? entry("bias_map") : static_cast<std::size_t>(-1);
        const std::size_t e_proj = entry("projection");
        const std::size_t e_core = entry(variant == Variant::G ? "W_fh" : "W");
        const std::size_t e_bh = entry("bias_h");
        const std::size_t e_sw = head_mode ? entry("softmax_w") : static_cast<std::size_t>(-1);
        const std::size_t e_sb = head_mode ? entry("softmax_bias") : static_cast<std::size_t>(-1);

        for (int rep = 0; rep < instances; ++rep) {
            ModelShapes s = shapes;
            s.n_classes = head_mode ? shapes.n_classes : 0;
            auto model = make_model(variant, s, mix_seed(seed, 7000 + rep));
            // strengthen the core so the check exercises real signal paths
            auto rscale = [&](Matrixd& m) {
                for (Index i = 0; i < m.size(); ++i) m.data()[i] = 0.5 * rng.normal();
            };
            if (variant == Variant::G) {
                rscale(model.factored.W_fx);
                rscale(model.factored.W_fy);
                rscale(model.factored.W_fh);
                for (Index i = 0; i < model.factored.bias_h.size(); ++i)
                    model.factored.bias_h[i] = 0.3 * rng.normal();
            } else {
                rscale(model.gaussian.W);
                for (Index i = 0; i < model.gaussian.hidden_bias.size(); ++i)
                    model.gaussian.hidden_bias[i] = 0.3 * rng.normal();
            }
            if (head_mode) rscale(model.softmax.W);

            FeatureTuple tuple;
            tuple.xs.resize(s.n_ctx, s.feature_dim);
            for (Index i = 0; i < tuple.xs.size(); ++i) tuple.xs.data()[i] = 0.5 * rng.normal();
            tuple.y.resize(model.uses_bias_map() ? model.spoken_dim() : s.feature_dim);
            for (Index i = 0; i < tuple.y.size(); ++i) tuple.y[i] = 0.5 * rng.normal();
            tuple.target.resize(model.output_dim());
            for (Index i = 0; i < tuple.target.size(); ++i)
                tuple.target[i] = std::abs(0.5 * rng.normal());
            tuple.label_index =
                head_mode ? static_cast<int>(rng.next() % static_cast<std::uint64_t>(
                                                              shapes.n_classes))
                          : -1;

            const auto grads = supervised_gradients(model, {tuple}, {0});
            auto loss = [&]() {
                auto out = forward(model, tuple);
                if (head_mode) return -std::log(out.class_probs[tuple.label_index]);
                return (out.recovered - tuple.target).squaredNorm();
            };

            for (std::size_t i = 0; i < model.context.F.size(); ++i)
                local[e_ctx].max_rel_err =
                    std::max(local[e_ctx].max_rel_err,
                             detail::matrix_fd_worst(model.context.F[i], grads.context[i], loss));
            if (variant != Variant::I)
                local[e_bias].max_rel_err =
                    std::max(local[e_bias].max_rel_err,
                             detail::matrix_fd_worst(model.bias_map.M, grads.bias_map, loss));
            local[e_proj].max_rel_err =
                std::max(local[e_proj].max_rel_err,
                         detail::matrix_fd_worst(model.projection.J, grads.projection, loss));
            Matrixd& core_w = variant == Variant::G ? model.factored.W_fh : model.gaussian.W;
            local[e_core].max_rel_err = std::max(
                local[e_core].max_rel_err, detail::matrix_fd_worst(core_w, grads.core_w, loss));
            Vectord& bias_h =
                variant == Variant::G ? model.factored.bias_h : model.gaussian.hidden_bias;
            local[e_bh].max_rel_err =
                std::max(local[e_bh].max_rel_err,
                         detail::vector_fd_worst(bias_h, grads.core_bias_h, loss));
            if (head_mode) {
                local[e_sw].max_rel_err =
                    std::max(local[e_sw].max_rel_err,
                             detail::matrix_fd_worst(model.softmax.W, grads.softmax_w, loss));
                local[e_sb].max_rel_err = std::max(
                    local[e_sb].max_rel_err,
                    detail::vector_fd_worst(model.softmax.bias, grads.softmax_bias, loss));
            }
        }
        for (auto& e : local) e.pass = e.max_rel_err < e.tolerance;
        table.insert(table.end(), local.begin(), local.end());
    };

    run_loss_mode(false);
    if (with_head) run_loss_mode(true);
    return table;
}

}  // namespace nes
