#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "nes/core.hpp"

namespace nes {

/// One second-order IIR section, denominator normalized to a0 = 1.
struct BiquadSection {
    double b0 = 0, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;
};

using SosFilter = std::vector<BiquadSection>;

namespace detail {

using cplx = std::complex<double>;

// Butterworth analog prototype: poles on the unit circle, left half-plane.
inline std::vector<cplx> butter_prototype_poles(int order) {
    std::vector<cplx> poles(order);
    for (int k = 0; k < order; ++k) {
        const double theta =
            std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order) + std::numbers::pi / 2.0;
        poles[k] = std::polar(1.0, theta);
    }
    return poles;
}

struct Zpk {
    std::vector<cplx> zeros;
    std::vector<cplx> poles;
    double gain = 1.0;
};

inline Zpk lowpass_to_lowpass(const std::vector<cplx>& proto, double wc) {
    Zpk out;
    out.poles.reserve(proto.size());
    for (const cplx& p : proto) out.poles.push_back(p * wc);
    out.gain = std::pow(wc, static_cast<double>(proto.size()));
    return out;
}

inline Zpk lowpass_to_bandpass(const std::vector<cplx>& proto, double w1, double w2) {
    const double bw = w2 - w1;
    const double w0 = std::sqrt(w1 * w2);
    Zpk out;
    out.poles.reserve(2 * proto.size());
    for (const cplx& p : proto) {
        const cplx t = p * (bw / 2.0);
        const cplx d = std::sqrt(t * t - w0 * w0);
        out.poles.push_back(t + d);
        out.poles.push_back(t - d);
    }
    out.zeros.assign(proto.size(), cplx(0.0, 0.0));  // s = 0
    out.gain = std::pow(bw, static_cast<double>(proto.size()));
    return out;
}

// Bilinear transform s -> z with prewarped frequencies; appends the
// degree-deficit zeros at z = -1.
inline Zpk bilinear(const Zpk& analog, double fs) {
    const double fs2 = 2.0 * fs;
    Zpk out;
    cplx num(1.0, 0.0), den(1.0, 0.0);
    for (const cplx& z : analog.zeros) {
        out.zeros.push_back((fs2 + z) / (fs2 - z));
        num *= (fs2 - z);
    }
    for (const cplx& p : analog.poles) {
        out.poles.push_back((fs2 + p) / (fs2 - p));
        den *= (fs2 - p);
    }
    out.gain = analog.gain * (num / den).real();
    while (out.zeros.size() < out.poles.size()) out.zeros.emplace_back(-1.0, 0.0);
    return out;
}

// Group digital poles into sections: complex-conjugate pairs first, then
// remaining real poles two at a time.
inline std::vector<std::pair<cplx, cplx>> pair_poles(std::vector<cplx> poles) {
    std::vector<cplx> upper;
    std::vector<double> reals;
    for (const cplx& p : poles) {
        if (p.imag() > 1e-10)
            upper.push_back(p);
        else if (p.imag() >= -1e-10)
            reals.push_back(p.real());
    }
    std::sort(upper.begin(), upper.end(),
              [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
    std::sort(reals.begin(), reals.end());

    std::vector<std::pair<cplx, cplx>> pairs;
    for (const cplx& p : upper) pairs.emplace_back(p, std::conj(p));
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2)
        pairs.emplace_back(cplx(reals[i], 0.0), cplx(reals[i + 1], 0.0));
    if (reals.size() % 2 == 1)
        pairs.emplace_back(cplx(reals.back(), 0.0), cplx(0.0, 0.0));  // first-order tail
    return pairs;
}

}  // namespace detail

/// Digital Butterworth band-pass as cascaded biquads (zeros at z = +/-1).
inline SosFilter butter_bandpass(int order, double sample_rate_hz, double low_hz, double high_hz) {
    if (order < 1) throw ConfigError("butter_bandpass: order must be >= 1");
    if (!(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < sample_rate_hz / 2.0))
        throw ConfigError("butter_bandpass: require 0 < low < high < fs/2");

    const double w1 = 2.0 * sample_rate_hz * std::tan(std::numbers::pi * low_hz / sample_rate_hz);
    const double w2 = 2.0 * sample_rate_hz * std::tan(std::numbers::pi * high_hz / sample_rate_hz);
    detail::Zpk digital = detail::bilinear(
        detail::lowpass_to_bandpass(detail::butter_prototype_poles(order), w1, w2),
        sample_rate_hz);

    auto pairs = detail::pair_poles(digital.poles);
    SosFilter sos(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [p, q] = pairs[i];
        sos[i].a1 = -(p + q).real();
        sos[i].a2 = (p * q).real();
        // one zero at +1 and one at -1 per section: (1 - z^-1)(1 + z^-1)
        sos[i].b0 = 1.0;
        sos[i].b1 = 0.0;
        sos[i].b2 = -1.0;
    }
    sos.front().b0 *= digital.gain;
    sos.front().b1 *= digital.gain;
    sos.front().b2 *= digital.gain;
    return sos;
}

/// Digital Butterworth low-pass as cascaded biquads (zeros at z = -1).
inline SosFilter butter_lowpass(int order, double sample_rate_hz, double cutoff_hz) {
    if (order < 1) throw ConfigError("butter_lowpass: order must be >= 1");
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0))
        throw ConfigError("butter_lowpass: require 0 < cutoff < fs/2");

    const double wc = 2.0 * sample_rate_hz * std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
    detail::Zpk digital = detail::bilinear(
        detail::lowpass_to_lowpass(detail::butter_prototype_poles(order), wc), sample_rate_hz);

    auto pairs = detail::pair_poles(digital.poles);
    SosFilter sos(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [p, q] = pairs[i];
        const bool first_order = (q == detail::cplx(0.0, 0.0) && p.imag() == 0.0 &&
                                  i + 1 == pairs.size() && order % 2 == 1);
        sos[i].a1 = first_order ? -p.real() : -(p + q).real();
        sos[i].a2 = first_order ? 0.0 : (p * q).real();
        if (first_order) {
            sos[i].b0 = 1.0;
            sos[i].b1 = 1.0;
            sos[i].b2 = 0.0;
        } else {
            sos[i].b0 = 1.0;
            sos[i].b1 = 2.0;
            sos[i].b2 = 1.0;
        }
    }
    sos.front().b0 *= digital.gain;
    sos.front().b1 *= digital.gain;
    sos.front().b2 *= digital.gain;
    return sos;
}

/// Steady-state (unit-step) state per section, scaled by the cumulative DC
/// gain of the preceding cascade. Multiply by the first input sample to get
/// the transient-matched initial state used by filtfilt.
inline std::vector<std::array<double, 2>> sos_step_state(const SosFilter& sos) {
    std::vector<std::array<double, 2>> zi(sos.size());
    double scale = 1.0;
    for (std::size_t k = 0; k < sos.size(); ++k) {
        const auto& s = sos[k];
        const double denom = 1.0 + s.a1 + s.a2;
        const double g = (denom != 0.0) ? (s.b0 + s.b1 + s.b2) / denom : 0.0;
        zi[k][0] = scale * (s.b1 + s.b2 - (s.a1 + s.a2) * g);
        zi[k][1] = scale * (s.b2 - s.a2 * g);
        scale *= g;
    }
    return zi;
}

/// Cascaded direct-form-II-transposed filtering with optional initial state.
inline Vectord sosfilt(const SosFilter& sos, const Vectord& x,
                       const std::vector<std::array<double, 2>>* zi = nullptr,
                       double zi_scale = 0.0) {
    Vectord y = x;
    for (std::size_t k = 0; k < sos.size(); ++k) {
        const auto& s = sos[k];
        double s0 = zi ? (*zi)[k][0] * zi_scale : 0.0;
        double s1 = zi ? (*zi)[k][1] * zi_scale : 0.0;
        for (Index i = 0; i < y.size(); ++i) {
            const double in = y[i];
            const double out = s.b0 * in + s0;
            s0 = s.b1 * in - s.a1 * out + s1;
            s1 = s.b2 * in - s.a2 * out;
            y[i] = out;
        }
    }
    return y;
}

/// Zero-phase forward-backward filtering with odd-reflection edge padding.
inline Vectord filtfilt(const SosFilter& sos, const Vectord& x) {
    const Index n = x.size();
    if (n == 0) return x;

    const Index padlen = std::min<Index>(n - 1, static_cast<Index>(3 * (2 * sos.size() + 1)));
    Vectord ext(n + 2 * padlen);
    for (Index i = 0; i < padlen; ++i) ext[i] = 2.0 * x[0] - x[padlen - i];
    ext.segment(padlen, n) = x;
    for (Index i = 0; i < padlen; ++i) ext[padlen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    const auto zi = sos_step_state(sos);
    Vectord y = sosfilt(sos, ext, &zi, ext[0]);
    y.reverseInPlace();
    y = sosfilt(sos, y, &zi, y[0]);
    y.reverseInPlace();
    return y.segment(padlen, n);
}

/// Zero-phase Butterworth band-pass; output length equals input length.
inline Vectord bandpass(const Vectord& signal, double sample_rate_hz, double low_hz,
                        double high_hz, int order = 4) {
    const SosFilter sos = butter_bandpass(order, sample_rate_hz, low_hz, high_hz);
    if (!signal.allFinite()) throw DataError("bandpass: non-finite samples");
    return filtfilt(sos, signal);
}

/// Subtracts the mean of every channel row.
inline Matrixd demean_channels(const Matrixd& channels) {
    Matrixd out = channels;
    out.colwise() -= channels.rowwise().mean();
    return out;
}

/// Z-scores every channel row (population variance). Constant rows map to
/// all zeros instead of dividing by zero.
inline Matrixd normalize_channels(const Matrixd& channels) {
    Matrixd out(channels.rows(), channels.cols());
    for (Index r = 0; r < channels.rows(); ++r) {
        const double mean = channels.row(r).mean();
        const double var = (channels.row(r).array() - mean).square().mean();
        if (var < 1e-30)
            out.row(r).setZero();
        else
            out.row(r) = (channels.row(r).array() - mean) / std::sqrt(var);
    }
    return out;
}

/// Mean squared sample value per analysis window.
/// Window count = floor((N - W) / H) + 1.
inline Vectord window_power(const Vectord& signal, double sample_rate_hz, double win_ms = 20.0,
                            double hop_ms = 10.0) {
    if (!(sample_rate_hz > 0.0) || !(win_ms > 0.0) || !(hop_ms > 0.0))
        throw ConfigError("window_power: rates and window sizes must be positive");
    const Index win = static_cast<Index>(std::lround(win_ms * sample_rate_hz / 1000.0));
    const Index hop = static_cast<Index>(std::lround(hop_ms * sample_rate_hz / 1000.0));
    if (win < 1 || hop < 1) throw ConfigError("window_power: window/hop shorter than one sample");
    if (signal.size() < win) throw DataError("window_power: signal shorter than one window");

    const Index count = (signal.size() - win) / hop + 1;
    Vectord power(count);
    for (Index k = 0; k < count; ++k)
        power[k] = signal.segment(k * hop, win).array().square().mean();
    return power;
}

/// Anti-aliased rate reduction. Output length = ceil(N * to / from); exact
/// pass-through when the rates match.
inline Vectord downsample(const Vectord& speech, double from_hz, double to_hz = 1000.0) {
    if (!(from_hz > 0.0) || !(to_hz > 0.0)) throw ConfigError("downsample: rates must be positive");
    if (from_hz < to_hz) throw ConfigError("downsample: upsampling is not supported");
    if (from_hz == to_hz) return speech;
    if (speech.size() == 0) return speech;

    const SosFilter sos = butter_lowpass(8, from_hz, 0.45 * to_hz);
    const Vectord smooth = filtfilt(sos, speech);

    const Index n = speech.size();
    const Index out_len = static_cast<Index>(
        std::ceil(static_cast<double>(n) * to_hz / from_hz - 1e-12));
    const double ratio = from_hz / to_hz;
    Vectord out(out_len);
    for (Index m = 0; m < out_len; ++m) {
        const double pos = static_cast<double>(m) * ratio;
        const Index lo = std::min<Index>(static_cast<Index>(pos), n - 1);
        const Index hi = std::min<Index>(lo + 1, n - 1);
        const double frac = pos - static_cast<double>(lo);
        out[m] = smooth[lo] + frac * (smooth[hi] - smooth[lo]);
    }
    return out;
}

/// Windowed speech power normalized to peak 1 (a zero signal stays zero).
inline Vectord speech_envelope(const Vectord& speech, double sample_rate_hz) {
    Vectord env = window_power(speech, sample_rate_hz);
    const double peak = env.maxCoeff();
    if (peak > 0.0) env /= peak;
    return env;
}

/// Right-pads every vector with zeros to exactly `length` samples.
inline Matrixd pad_to_length(const std::vector<Vectord>& vectors, Index length) {
    if (length < 0) throw ConfigError("pad_to_length: negative length");
    Matrixd out = Matrixd::Zero(static_cast<Index>(vectors.size()), length);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() > length)
            throw DataError("pad_to_length: vector " + std::to_string(i) + " longer than target");
        out.row(static_cast<Index>(i)).head(vectors[i].size()) = vectors[i].transpose();
    }
    return out;
}

/// Linear resampling to exactly `target` entries; identity when the size
/// already matches, endpoints preserved.
inline Vectord resample_linear(const Vectord& v, Index target) {
    if (target < 1) throw ConfigError("resample_linear: target must be >= 1");
    if (v.size() == 0) throw DataError("resample_linear: empty input");
    if (v.size() == target) return v;
    Vectord out(target);
    if (target == 1 || v.size() == 1) {
        out.setConstant(v[0]);
        return out;
    }
    const double step = static_cast<double>(v.size() - 1) / static_cast<double>(target - 1);
    for (Index m = 0; m < target; ++m) {
        const double pos = static_cast<double>(m) * step;
        const Index lo = std::min<Index>(static_cast<Index>(pos), v.size() - 2);
        const double frac = pos - static_cast<double>(lo);
        out[m] = v[lo] + frac * (v[lo + 1] - v[lo]);
    }
    return out;
}

}  // namespace nes
