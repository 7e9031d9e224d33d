#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "nes/model.hpp"

namespace nes {

// Model file layout: "NESM" magic, u32 format version, u8 variant tag,
// u8 head flag, seven i64 shape fields, then every parameter block as
// little-endian 64-bit floats in row-major order.

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are unsupported");

constexpr std::uint32_t kModelFormatVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_matrix(std::ostream& os, const Matrixd& m) {
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            os.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
}
inline void write_vector(std::ostream& os, const Vectord& v) {
    for (Index i = 0; i < v.size(); ++i) {
        const double x = v[i];
        os.write(reinterpret_cast<const char*>(&x), sizeof x);
    }
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw DataError("model file truncated while reading " + what);
    return v;
}
inline std::int64_t read_i64(std::istream& is, const std::string& what) {
    std::int64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw DataError("model file truncated while reading " + what);
    return v;
}
inline Matrixd read_matrix(std::istream& is, Index rows, Index cols, const std::string& what) {
    Matrixd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) {
            double v = 0;
            if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
                throw DataError("model file truncated while reading " + what);
            m(r, c) = v;
        }
    return m;
}
inline Vectord read_vector(std::istream& is, Index n, const std::string& what) {
    Vectord v(n);
    for (Index i = 0; i < n; ++i) {
        double x = 0;
        if (!is.read(reinterpret_cast<char*>(&x), sizeof x))
            throw DataError("model file truncated while reading " + what);
        v[i] = x;
    }
    return v;
}

}  // namespace detail

inline void save_model(const NesModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("save_model: cannot open '" + path + "' for writing");

    os.write("NESM", 4);
    detail::write_u32(os, detail::kModelFormatVersion);
    const std::uint8_t tag = model.variant == Variant::I   ? 0
                             : model.variant == Variant::B ? 1
                                                           : 2;
    os.put(static_cast<char>(tag));
    os.put(static_cast<char>(model.has_softmax() ? 1 : 0));

    detail::write_i64(os, model.context_count());
    detail::write_i64(os, model.feature_dim());
    detail::write_i64(os, model.uses_bias_map() ? model.spoken_dim() : 0);
    detail::write_i64(os, model.hidden_dim());
    detail::write_i64(os, model.output_dim());
    detail::write_i64(os, model.gated() ? model.factored.factor_count() : 0);
    detail::write_i64(os, model.has_softmax() ? model.class_count() : 0);

    for (const auto& f : model.context.F) detail::write_matrix(os, f);
    if (model.uses_bias_map()) detail::write_matrix(os, model.bias_map.M);
    detail::write_matrix(os, model.projection.J);
    if (model.gated()) {
        detail::write_matrix(os, model.factored.W_fx);
        detail::write_matrix(os, model.factored.W_fy);
        detail::write_matrix(os, model.factored.W_fh);
        detail::write_vector(os, model.factored.bias_x);
        detail::write_vector(os, model.factored.bias_y);
        detail::write_vector(os, model.factored.bias_h);
        detail::write_vector(os, model.factored.sigma_x);
        detail::write_vector(os, model.factored.sigma_y);
    } else {
        detail::write_matrix(os, model.gaussian.W);
        detail::write_vector(os, model.gaussian.hidden_bias);
        detail::write_vector(os, model.gaussian.visible_bias);
        detail::write_vector(os, model.gaussian.sigma);
    }
    if (model.has_softmax()) {
        detail::write_matrix(os, model.softmax.W);
        detail::write_vector(os, model.softmax.bias);
    }
    if (!os) throw DataError("save_model: write failed for '" + path + "'");
}

inline NesModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_model: cannot open '" + path + "'");

    char magic[4] = {};
    if (!is.read(magic, 4) || std::string(magic, 4) != "NESM")
        throw DataError("load_model: '" + path + "' is not a model file (bad magic)");
    const std::uint32_t version = detail::read_u32(is, "format version");
    if (version != detail::kModelFormatVersion)
        throw DataError("load_model: unsupported format version " + std::to_string(version));

    const int tag = is.get();
    const int head = is.get();
    if (tag < 0 || tag > 2 || head < 0 || head > 1)
        throw DataError("load_model: corrupt header in '" + path + "'");

    const Index n_ctx = detail::read_i64(is, "context count");
    const Index d = detail::read_i64(is, "feature dim");
    const Index m = detail::read_i64(is, "spoken dim");
    const Index k = detail::read_i64(is, "hidden dim");
    const Index l = detail::read_i64(is, "output dim");
    const Index f = detail::read_i64(is, "factor count");
    const Index n_classes = detail::read_i64(is, "class count");
    if (n_ctx < 1 || d < 1 || k < 1 || l < 1 || m < 0 || f < 0 || n_classes < 0)
        throw DataError("load_model: corrupt shape header in '" + path + "'");

    NesModel model;
    model.variant = tag == 0 ? Variant::I : tag == 1 ? Variant::B : Variant::G;
    if (model.uses_bias_map() && m < 1)
        throw DataError("load_model: variant requires a bias map but none is stored");
    if (model.gated() && f < 1)
        throw DataError("load_model: gated variant requires a factor count");

    model.context.F.reserve(static_cast<std::size_t>(n_ctx));
    for (Index i = 0; i < n_ctx; ++i)
        model.context.F.push_back(detail::read_matrix(is, d, d, "context transform"));
    if (model.uses_bias_map()) model.bias_map.M = detail::read_matrix(is, m, d, "bias map");
    model.projection.J = detail::read_matrix(is, k, l, "projection");
    if (model.gated()) {
        model.factored.W_fx = detail::read_matrix(is, d, f, "input factors");
        model.factored.W_fy = detail::read_matrix(is, m, f, "spoken factors");
        model.factored.W_fh = detail::read_matrix(is, k, f, "hidden factors");
        model.factored.bias_x = detail::read_vector(is, d, "input bias");
        model.factored.bias_y = detail::read_vector(is, m, "spoken bias");
        model.factored.bias_h = detail::read_vector(is, k, "hidden bias");
        model.factored.sigma_x = detail::read_vector(is, d, "input sigma");
        model.factored.sigma_y = detail::read_vector(is, m, "spoken sigma");
    } else {
        model.gaussian.W = detail::read_matrix(is, d, k, "core weights");
        model.gaussian.hidden_bias = detail::read_vector(is, k, "hidden bias");
        model.gaussian.visible_bias = detail::read_vector(is, d, "visible bias");
        model.gaussian.sigma = detail::read_vector(is, d, "sigma");
    }
    if (head == 1) {
        model.softmax.W = detail::read_matrix(is, l, n_classes, "softmax weights");
        model.softmax.bias = detail::read_vector(is, n_classes, "softmax bias");
    }
    return model;
}

}  // namespace nes
