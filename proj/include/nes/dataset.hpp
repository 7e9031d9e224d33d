#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "nes/core.hpp"
#include "nes/dsp.hpp"
#include "nes/trial.hpp"

namespace nes {

/// The eleven KARA ONE prompts: seven phonemic/syllabic targets followed by
/// four words.
inline const std::vector<std::string>& canonical_labels() {
    static const std::vector<std::string> labels = {"iy",  "uw",  "piy", "tiy", "diy", "m",
                                                    "n",   "pat", "pot", "knew", "gnaw"};
    return labels;
}

inline const std::vector<std::string>& phonemic_labels() {
    static const std::vector<std::string> labels = {"iy", "uw", "piy", "tiy", "diy", "m", "n"};
    return labels;
}

struct TrialEntry {
    std::string participant;
    int trial = 0;
    std::string label;
    std::string file;
    std::array<Index, 3> state_marks{};
    std::string speech_file;
    double speech_rate_hz = 0.0;
};

struct DatasetManifest {
    int version = 1;
    double sample_rate_hz = 1000.0;
    std::vector<std::string> channels;
    std::vector<std::string> selected_channels;  // optional subset
    std::vector<std::string> labels;
    std::vector<TrialEntry> trials;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<RawRecording> recordings;
};

// ---- raw float32 sample files ------------------------------------------

inline void write_f32(const std::string& path, const Matrixd& samples) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    for (Index r = 0; r < samples.rows(); ++r)
        for (Index c = 0; c < samples.cols(); ++c) {
            const float v = static_cast<float>(samples(r, c));
            os.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    if (!os) throw DataError("write failed for '" + path + "'");
}

inline Matrixd read_f32(const std::string& path, Index rows, Index cols) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open sample file '" + path + "'");
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(is.tellg());
    const auto expected = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 4u;
    if (bytes != expected)
        throw DataError("sample file '" + path + "' holds " + std::to_string(bytes) +
                        " bytes, expected " + std::to_string(expected));
    is.seekg(0, std::ios::beg);
    Matrixd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) {
            float v = 0;
            is.read(reinterpret_cast<char*>(&v), sizeof v);
            m(r, c) = static_cast<double>(v);
        }
    if (!is) throw DataError("read failed for '" + path + "'");
    return m;
}

// ---- manifest JSON -------------------------------------------------------

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["version"] = m.version;
    j["sample_rate_hz"] = m.sample_rate_hz;
    j["channels"] = m.channels;
    if (!m.selected_channels.empty()) j["selected_channels"] = m.selected_channels;
    j["labels"] = m.labels;
    nlohmann::json trials = nlohmann::json::array();
    for (const TrialEntry& t : m.trials) {
        nlohmann::json e;
        e["participant"] = t.participant;
        e["trial"] = t.trial;
        e["label"] = t.label;
        e["file"] = t.file;
        e["state_marks"] = {t.state_marks[0], t.state_marks[1], t.state_marks[2]};
        e["speech_file"] = t.speech_file;
        e["speech_rate_hz"] = t.speech_rate_hz;
        trials.push_back(std::move(e));
    }
    j["trials"] = std::move(trials);
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    try {
        DatasetManifest m;
        m.version = j.at("version").get<int>();
        if (m.version != 1)
            throw DataError("unsupported manifest version " + std::to_string(m.version));
        m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
        m.channels = j.at("channels").get<std::vector<std::string>>();
        if (j.contains("selected_channels"))
            m.selected_channels = j.at("selected_channels").get<std::vector<std::string>>();
        m.labels = j.at("labels").get<std::vector<std::string>>();
        for (const auto& e : j.at("trials")) {
            TrialEntry t;
            t.participant = e.at("participant").get<std::string>();
            t.trial = e.at("trial").get<int>();
            t.label = e.at("label").get<std::string>();
            t.file = e.at("file").get<std::string>();
            const auto marks = e.at("state_marks").get<std::vector<Index>>();
            if (marks.size() != 3)
                throw DataError("trial " + std::to_string(t.trial) +
                                ": state_marks must hold three boundaries");
            t.state_marks = {marks[0], marks[1], marks[2]};
            t.speech_file = e.at("speech_file").get<std::string>();
            t.speech_rate_hz = e.at("speech_rate_hz").get<double>();
            m.trials.push_back(std::move(t));
        }
        for (const std::string& sel : m.selected_channels)
            if (std::find(m.channels.begin(), m.channels.end(), sel) == m.channels.end())
                throw DataError("selected channel '" + sel + "' is not a manifest channel");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    return manifest_from_json(j);
}

// ---- dataset load / store -------------------------------------------------

/// Loads every trial referenced by a manifest. When the manifest names
/// selected channels (and `use_selected` holds), recordings keep only those
/// rows, ordered as listed.
inline Dataset load_dataset(const std::string& manifest_path, bool use_selected = true) {
    Dataset ds;
    ds.manifest = load_manifest(manifest_path);
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

    std::vector<Index> keep;
    if (use_selected && !ds.manifest.selected_channels.empty()) {
        for (const std::string& name : ds.manifest.selected_channels) {
            const auto it =
                std::find(ds.manifest.channels.begin(), ds.manifest.channels.end(), name);
            keep.push_back(static_cast<Index>(it - ds.manifest.channels.begin()));
        }
    }

    ds.recordings.reserve(ds.manifest.trials.size());
    for (const TrialEntry& entry : ds.manifest.trials) {
        if (std::find(ds.manifest.labels.begin(), ds.manifest.labels.end(), entry.label) ==
            ds.manifest.labels.end())
            throw DataError("trial " + std::to_string(entry.trial) + ": unknown label '" +
                            entry.label + "'");
        const std::string file = (base / entry.file).string();
        const std::string speech_file = (base / entry.speech_file).string();
        if (!std::filesystem::exists(file))
            throw DataError("trial " + std::to_string(entry.trial) + ": missing sample file '" +
                            file + "'");
        if (!std::filesystem::exists(speech_file))
            throw DataError("trial " + std::to_string(entry.trial) + ": missing speech file '" +
                            speech_file + "'");

        const auto n_channels = static_cast<Index>(ds.manifest.channels.size());
        const auto file_bytes = std::filesystem::file_size(file);
        if (file_bytes % (static_cast<std::uint64_t>(n_channels) * 4u) != 0)
            throw DataError("trial " + std::to_string(entry.trial) + ": sample file '" + file +
                            "' does not divide into " + std::to_string(n_channels) + " channels");
        const Index n_samples =
            static_cast<Index>(file_bytes / (static_cast<std::uint64_t>(n_channels) * 4u));

        RawRecording rec;
        rec.channels = read_f32(file, n_channels, n_samples);
        rec.sample_rate_hz = ds.manifest.sample_rate_hz;
        rec.state_marks = entry.state_marks;
        rec.label = entry.label;
        rec.speech_rate_hz = entry.speech_rate_hz;
        const auto speech_bytes = std::filesystem::file_size(speech_file);
        if (speech_bytes % 4u != 0)
            throw DataError("trial " + std::to_string(entry.trial) + ": speech file '" +
                            speech_file + "' is not a float32 stream");
        rec.speech = read_f32(speech_file, 1, static_cast<Index>(speech_bytes / 4u))
                         .row(0)
                         .transpose();

        if (!keep.empty()) {
            Matrixd subset(static_cast<Index>(keep.size()), rec.channels.cols());
            for (std::size_t i = 0; i < keep.size(); ++i)
                subset.row(static_cast<Index>(i)) = rec.channels.row(keep[i]);
            rec.channels = std::move(subset);
        }
        validate_recording(rec);
        ds.recordings.push_back(std::move(rec));
    }
    return ds;
}

/// Writes the sample files and manifest.json under `dir`. The manifest must
/// describe the recordings one-to-one.
inline void write_dataset(const Dataset& ds, const std::string& dir) {
    if (ds.manifest.trials.size() != ds.recordings.size())
        throw ConfigError("write_dataset: manifest and recordings disagree");
    std::filesystem::create_directories(dir);
    const std::filesystem::path base(dir);
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
        const TrialEntry& entry = ds.manifest.trials[i];
        write_f32((base / entry.file).string(), ds.recordings[i].channels);
        write_f32((base / entry.speech_file).string(),
                  ds.recordings[i].speech.transpose());
    }
    std::ofstream os(base / "manifest.json");
    if (!os) throw DataError("cannot write manifest under '" + dir + "'");
    os << manifest_to_json(ds.manifest).dump(2) << '\n';
}

// ---- synthetic data ---------------------------------------------------------

struct SynthConfig {
    int n_classes = 4;
    Index n_channels = 8;
    Index feature_dim = 50;  // D; sets the imagined/spoken duration
    int trials_per_class = 80;
    double noise_level = 0.1;    // per-sample noise sigma
    double gate_strength = 1.0;  // scales the imagined->spoken gate
    std::uint64_t seed = 0;
    double sample_rate_hz = 1000.0;
    double speech_rate_hz = 8000.0;
    double rest_ms = 300.0;
    double stimulus_ms = 300.0;
};

struct SynthClassTruth {
    std::string label;
    Vectord envelope;  // frame-level prototype, peak 1
    double carrier_hz = 0.0;
    double speech_carrier_hz = 0.0;
    Vectord channel_gains;
    Vectord gate;
};

struct SynthGroundTruth {
    std::vector<SynthClassTruth> classes;
};

struct SynthDataset {
    Dataset dataset;
    SynthGroundTruth truth;
};

namespace detail {

// smoothed random walk, shifted and peak-normalized to [0, 1]
inline Vectord smooth_walk(Index n, Rng& rng) {
    Vectord walk(n);
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
        acc += rng.normal();
        walk[i] = acc;
    }
    for (int pass = 0; pass < 2; ++pass) {
        Vectord smooth(n);
        const Index half = 4;
        for (Index i = 0; i < n; ++i) {
            double sum = 0.0;
            Index count = 0;
            for (Index o = -half; o <= half; ++o) {
                const Index idx = i + o;
                if (idx >= 0 && idx < n) {
                    sum += walk[idx];
                    ++count;
                }
            }
            smooth[i] = sum / static_cast<double>(count);
        }
        walk = smooth;
    }
    walk.array() -= walk.minCoeff();
    const double peak = walk.maxCoeff();
    if (peak > 0.0)
        walk /= peak;
    else
        for (Index i = 0; i < n; ++i) walk[i] = static_cast<double>(i) / std::max<Index>(1, n - 1);
    return walk;
}

// evaluate frame-level envelope at a fraction of the segment
inline double envelope_at(const Vectord& env, double frac) {
    const double pos = frac * static_cast<double>(env.size() - 1);
    const Index lo = std::min<Index>(static_cast<Index>(pos), env.size() - 2);
    const double t = pos - static_cast<double>(lo);
    return env[lo] + t * (env[lo + 1] - env[lo]);
}

inline double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace detail

/// Deterministic synthetic corpus: each class owns a smooth envelope
/// prototype, a carrier tone, channel gains, and a gate; spoken EEG is the
/// gated imagined signal plus independent noise, and speech is the same
/// envelope on its own carrier. Samples are rounded to float32 so the
/// on-disk format reproduces them bit-exactly.
inline SynthDataset synth_generate(const SynthConfig& cfg) {
    if (cfg.n_classes < 1 ||
        cfg.n_classes > static_cast<int>(canonical_labels().size()))
        throw ConfigError("synth_generate: n_classes must be in [1, " +
                          std::to_string(canonical_labels().size()) + "]");
    if (cfg.n_channels < 1 || cfg.feature_dim < 2 || cfg.trials_per_class < 1)
        throw ConfigError("synth_generate: invalid sizes");
    if (cfg.noise_level < 0.0) throw ConfigError("synth_generate: noise_level must be >= 0");

    const double fs = cfg.sample_rate_hz;
    const Index rest_len = static_cast<Index>(std::lround(cfg.rest_ms * fs / 1000.0));
    const Index stim_len = static_cast<Index>(std::lround(cfg.stimulus_ms * fs / 1000.0));
    // segment length chosen so the native 20/10 ms window count equals D
    const Index seg_len = static_cast<Index>(
        std::lround(((static_cast<double>(cfg.feature_dim) - 1.0) * 10.0 + 20.0) * fs / 1000.0));
    const Index speech_len = static_cast<Index>(
        std::lround(static_cast<double>(seg_len) * cfg.speech_rate_hz / fs));
    const Index total = rest_len + stim_len + 2 * seg_len;

    SynthDataset out;
    out.dataset.manifest.sample_rate_hz = fs;
    for (Index ch = 0; ch < cfg.n_channels; ++ch)
        out.dataset.manifest.channels.push_back("ch" + std::to_string(ch + 1));
    out.dataset.manifest.labels.assign(canonical_labels().begin(),
                                       canonical_labels().begin() + cfg.n_classes);

    std::vector<Vectord> accepted;
    auto max_abs_corr = [&](const Vectord& env) {
        double worst = 0.0;
        const Vectord da = env.array() - env.mean();
        for (const Vectord& other : accepted) {
            const Vectord db = other.array() - other.mean();
            const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
            if (denom > 0.0) worst = std::max(worst, std::abs(da.dot(db)) / denom);
        }
        return worst;
    };

    for (int c = 0; c < cfg.n_classes; ++c) {
        Rng class_rng = Rng(cfg.seed).fork(1000 + static_cast<std::uint64_t>(c));
        SynthClassTruth truth;
        truth.label = out.dataset.manifest.labels[static_cast<std::size_t>(c)];
        // redraw until the prototype is clearly distinguishable from the
        // classes drawn so far; walks at this length correlate easily
        truth.envelope = detail::smooth_walk(cfg.feature_dim, class_rng);
        double best = max_abs_corr(truth.envelope);
        for (int attempt = 0; attempt < 200 && best >= 0.85; ++attempt) {
            Vectord candidate = detail::smooth_walk(cfg.feature_dim, class_rng);
            const double corr = max_abs_corr(candidate);
            if (corr < best) {
                best = corr;
                truth.envelope = std::move(candidate);
            }
        }
        accepted.push_back(truth.envelope);
        truth.carrier_hz = class_rng.uniform(60.0, 180.0);
        truth.speech_carrier_hz = class_rng.uniform(150.0, 350.0);
        const double phase = class_rng.uniform(0.0, 2.0 * std::numbers::pi);
        truth.channel_gains.resize(cfg.n_channels);
        truth.gate.resize(cfg.n_channels);
        for (Index ch = 0; ch < cfg.n_channels; ++ch) {
            truth.channel_gains[ch] = class_rng.uniform(0.3, 1.0);
            truth.gate[ch] = cfg.gate_strength * class_rng.uniform(0.2, 1.0);
        }

        // deterministic per-class source signals
        Vectord source(seg_len);
        for (Index t = 0; t < seg_len; ++t) {
            const double frac = static_cast<double>(t) / static_cast<double>(seg_len - 1);
            source[t] = detail::envelope_at(truth.envelope, frac) *
                        std::sin(2.0 * std::numbers::pi * truth.carrier_hz *
                                     static_cast<double>(t) / fs +
                                 phase);
        }
        Vectord speech(speech_len);
        for (Index t = 0; t < speech_len; ++t) {
            const double frac = static_cast<double>(t) / static_cast<double>(speech_len - 1);
            speech[t] = detail::envelope_at(truth.envelope, frac) *
                        std::sin(2.0 * std::numbers::pi * truth.speech_carrier_hz *
                                 static_cast<double>(t) / cfg.speech_rate_hz);
        }
        for (Index t = 0; t < speech_len; ++t) speech[t] = detail::round_f32(speech[t]);

        for (int trial = 0; trial < cfg.trials_per_class; ++trial) {
            Rng trial_rng = Rng(cfg.seed).fork(
                1'000'000 + static_cast<std::uint64_t>(c) * 100'000 +
                static_cast<std::uint64_t>(trial));

            RawRecording rec;
            rec.channels.resize(cfg.n_channels, total);
            rec.sample_rate_hz = fs;
            rec.speech_rate_hz = cfg.speech_rate_hz;
            rec.label = truth.label;
            rec.state_marks = {rest_len, rest_len + stim_len, rest_len + stim_len + seg_len};

            for (Index ch = 0; ch < cfg.n_channels; ++ch) {
                for (Index t = 0; t < rest_len + stim_len; ++t)
                    rec.channels(ch, t) = cfg.noise_level * trial_rng.normal();
                for (Index t = 0; t < seg_len; ++t)
                    rec.channels(ch, rest_len + stim_len + t) =
                        truth.channel_gains[ch] * source[t] +
                        cfg.noise_level * trial_rng.normal();
                for (Index t = 0; t < seg_len; ++t) {
                    const double imagined = rec.channels(ch, rest_len + stim_len + t);
                    rec.channels(ch, rest_len + stim_len + seg_len + t) =
                        truth.gate[ch] * imagined + cfg.noise_level * trial_rng.normal();
                }
            }
            for (Index i = 0; i < rec.channels.size(); ++i)
                rec.channels.data()[i] = detail::round_f32(rec.channels.data()[i]);
            rec.speech = speech;

            TrialEntry entry;
            entry.participant = "S01";
            entry.trial = static_cast<int>(out.dataset.manifest.trials.size()) + 1;
            entry.label = truth.label;
            char buf[32];
            std::snprintf(buf, sizeof buf, "t%04d.f32", entry.trial);
            entry.file = buf;
            std::snprintf(buf, sizeof buf, "s%04d.f32", entry.trial);
            entry.speech_file = buf;
            entry.state_marks = rec.state_marks;
            entry.speech_rate_hz = cfg.speech_rate_hz;

            out.dataset.manifest.trials.push_back(std::move(entry));
            out.dataset.recordings.push_back(std::move(rec));
        }
        out.truth.classes.push_back(std::move(truth));
    }
    return out;
}

inline nlohmann::json ground_truth_to_json(const SynthGroundTruth& truth) {
    nlohmann::json j = nlohmann::json::array();
    for (const SynthClassTruth& c : truth.classes) {
        nlohmann::json e;
        e["label"] = c.label;
        e["carrier_hz"] = c.carrier_hz;
        e["speech_carrier_hz"] = c.speech_carrier_hz;
        e["envelope"] = std::vector<double>(c.envelope.data(), c.envelope.data() + c.envelope.size());
        e["channel_gains"] = std::vector<double>(c.channel_gains.data(),
                                                 c.channel_gains.data() + c.channel_gains.size());
        e["gate"] = std::vector<double>(c.gate.data(), c.gate.data() + c.gate.size());
        j.push_back(std::move(e));
    }
    return j;
}

// ---- train / eval split ------------------------------------------------------

struct EvalSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

/// Draws exactly `per_label_count` trials per label into the evaluation set;
/// the remainder trains. Deterministic under the seed.
inline EvalSplit split_eval(const std::vector<std::string>& trial_labels,
                            std::size_t per_label_count, std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < trial_labels.size(); ++i)
        by_label[trial_labels[i]].push_back(i);

    Rng rng = Rng(seed).fork(0x53504c4954ull);  // "SPLIT"
    EvalSplit split;
    for (auto& [label, indices] : by_label) {
        if (indices.size() < per_label_count)
            throw DataError("split_eval: label '" + label + "' has " +
                            std::to_string(indices.size()) + " trials, need " +
                            std::to_string(per_label_count));
        rng.shuffle(indices);
        split.eval.insert(split.eval.end(), indices.begin(),
                          indices.begin() + static_cast<std::ptrdiff_t>(per_label_count));
        split.train.insert(split.train.end(),
                           indices.begin() + static_cast<std::ptrdiff_t>(per_label_count),
                           indices.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.eval.begin(), split.eval.end());
    return split;
}

}  // namespace nes
