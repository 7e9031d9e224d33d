#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "nes/core.hpp"
#include "nes/dsp.hpp"

namespace nes {

/// One raw EEG trial: multichannel samples covering four successive states
/// (rest, stimulus, imagined speech, speaking), plus the speech waveform.
struct RawRecording {
    Matrixd channels;                   // n_channels x n_samples
    double sample_rate_hz = 0.0;
    std::array<Index, 3> state_marks{}; // boundaries between the four states
    Vectord speech;
    double speech_rate_hz = 0.0;
    std::string label;
};

inline void validate_recording(const RawRecording& rec) {
    if (rec.channels.rows() < 1) throw DataError("recording has no channels");
    if (!(rec.sample_rate_hz > 0.0) || !(rec.speech_rate_hz > 0.0))
        throw DataError("recording sample rates must be positive");
    const auto [a, b, c] = rec.state_marks;
    if (!(0 < a && a < b && b < c && c < rec.channels.cols()))
        throw DataError("state marks must be strictly increasing inside the sample range");
}

/// Conditioned trial: per-channel normalized imagined and spoken segments
/// plus the peak-normalized speech envelope.
struct Trial {
    Matrixd imagined;  // n_channels x T_i
    Matrixd spoken;    // n_channels x T_s
    double sample_rate_hz = 0.0;
    Vectord speech_envelope;
    std::string label;
};

/// Model-ready features: one windowed-power row per context channel, the
/// pooled spoken-EEG vector, and the envelope regression target.
struct FeatureTuple {
    Matrixd xs;      // n_ctx x D
    Vectord y;       // M
    Vectord target;  // L
    std::string label;
    int label_index = -1;
};

/// Splits the sample range into the four recorded states.
inline std::array<Matrixd, 4> segment_states(const RawRecording& rec) {
    validate_recording(rec);
    const auto [a, b, c] = rec.state_marks;
    const Index n = rec.channels.cols();
    return {rec.channels.leftCols(a), rec.channels.middleCols(a, b - a),
            rec.channels.middleCols(b, c - b), rec.channels.rightCols(n - c)};
}

struct PreprocessConfig {
    double band_low_hz = 1.0;
    double band_high_hz = 200.0;
    int filter_order = 4;
    double win_ms = 20.0;
    double hop_ms = 10.0;
    double target_speech_hz = 1000.0;
    Index feature_dim = 50;  // D
    Index envelope_len = 0;  // L; 0 means "same as feature_dim"
    // Slot for source-separation artifact cleanup; identity when unset.
    std::function<Matrixd(const Matrixd&)> artifact_removal;
};

/// Band-pass, optional artifact hook, demean, segment, and per-channel
/// z-scoring of the imagined and spoken states; the speech waveform is
/// resampled to the EEG rate and reduced to its power envelope.
inline Trial preprocess_recording(const RawRecording& rec, const PreprocessConfig& cfg) {
    validate_recording(rec);

    Matrixd filtered(rec.channels.rows(), rec.channels.cols());
    for (Index ch = 0; ch < rec.channels.rows(); ++ch)
        filtered.row(ch) = bandpass(rec.channels.row(ch).transpose(), rec.sample_rate_hz,
                                    cfg.band_low_hz, cfg.band_high_hz, cfg.filter_order)
                               .transpose();
    if (cfg.artifact_removal) filtered = cfg.artifact_removal(filtered);
    filtered = demean_channels(filtered);

    RawRecording clean = rec;
    clean.channels = std::move(filtered);
    auto states = segment_states(clean);

    Trial trial;
    trial.imagined = normalize_channels(states[2]);
    trial.spoken = normalize_channels(states[3]);
    trial.sample_rate_hz = rec.sample_rate_hz;
    trial.label = rec.label;

    const Vectord speech_at_eeg_rate =
        downsample(rec.speech, rec.speech_rate_hz, cfg.target_speech_hz);
    trial.speech_envelope = speech_envelope(speech_at_eeg_rate, cfg.target_speech_hz);
    return trial;
}

/// Pads (when shorter) or linearly resamples (when longer) to `target`.
inline Vectord fit_length(const Vectord& v, Index target) {
    if (v.size() == target) return v;
    if (v.size() < target) {
        Vectord out = Vectord::Zero(target);
        out.head(v.size()) = v;
        return out;
    }
    return resample_linear(v, target);
}

/// Windowed-power features per imagined channel resampled to D entries,
/// channel-averaged spoken powers as the conditioning vector y (M = D), and
/// the envelope fitted to L entries as the regression target.
inline FeatureTuple trial_to_features(const Trial& trial, Index feature_dim,
                                      Index envelope_len = 0, double win_ms = 20.0,
                                      double hop_ms = 10.0) {
    if (feature_dim < 1) throw ConfigError("trial_to_features: feature_dim must be >= 1");
    const Index n_ch = trial.imagined.rows();
    if (n_ch < 1 || trial.spoken.rows() != n_ch)
        throw DataError("trial_to_features: imagined/spoken channel counts disagree");
    const Index target_len = envelope_len > 0 ? envelope_len : feature_dim;

    FeatureTuple tuple;
    tuple.xs.resize(n_ch, feature_dim);
    Vectord pooled;
    for (Index ch = 0; ch < n_ch; ++ch) {
        const Vectord pow_i = window_power(trial.imagined.row(ch).transpose(),
                                           trial.sample_rate_hz, win_ms, hop_ms);
        tuple.xs.row(ch) = resample_linear(pow_i, feature_dim).transpose();

        const Vectord pow_s = window_power(trial.spoken.row(ch).transpose(),
                                           trial.sample_rate_hz, win_ms, hop_ms);
        if (ch == 0)
            pooled = pow_s;
        else
            pooled += pow_s;
    }
    pooled /= static_cast<double>(n_ch);
    tuple.y = resample_linear(pooled, feature_dim);
    tuple.target = fit_length(trial.speech_envelope, target_len);
    tuple.label = trial.label;
    return tuple;
}

/// Full preprocessing pipeline over a set of recordings; label indices are
/// assigned from the position in `label_set`.
inline std::vector<FeatureTuple> extract_features(const std::vector<RawRecording>& recordings,
                                                  const PreprocessConfig& cfg,
                                                  const std::vector<std::string>& label_set = {}) {
    std::vector<FeatureTuple> tuples;
    tuples.reserve(recordings.size());
    for (const RawRecording& rec : recordings) {
        Trial trial = preprocess_recording(rec, cfg);
        FeatureTuple t = trial_to_features(trial, cfg.feature_dim, cfg.envelope_len,
                                           cfg.win_ms, cfg.hop_ms);
        if (!label_set.empty()) {
            const auto it = std::find(label_set.begin(), label_set.end(), t.label);
            if (it == label_set.end())
                throw DataError("extract_features: unknown label '" + t.label + "'");
            t.label_index = static_cast<int>(it - label_set.begin());
        }
        tuples.push_back(std::move(t));
    }
    return tuples;
}

}  // namespace nes
