#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nes/core.hpp"
#include "nes/dataset.hpp"

namespace nes {

/// One binary phonological task: trials whose truth lies in `domain` (all
/// trials when empty) are scored by positive-set membership.
struct BinaryTaskSpec {
    std::string name;
    std::set<std::string> positive;
    std::set<std::string> domain;
};

struct BinaryResult {
    double accuracy = 0.0;
    std::size_t evaluated = 0;
};

inline BinaryResult binary_accuracy(const std::vector<std::string>& predictions,
                                    const std::vector<std::string>& truths,
                                    const BinaryTaskSpec& spec) {
    if (predictions.size() != truths.size())
        throw ConfigError("binary_accuracy: prediction/truth counts disagree");
    if (spec.positive.empty()) throw ConfigError("binary_accuracy: empty positive set");
    std::size_t evaluated = 0, correct = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (!spec.domain.empty() && spec.domain.count(truths[i]) == 0) continue;
        ++evaluated;
        const bool truth_pos = spec.positive.count(truths[i]) > 0;
        const bool pred_pos = spec.positive.count(predictions[i]) > 0;
        if (truth_pos == pred_pos) ++correct;
    }
    BinaryResult out;
    out.evaluated = evaluated;
    out.accuracy = evaluated == 0
                       ? 0.0
                       : static_cast<double>(correct) / static_cast<double>(evaluated);
    return out;
}

struct ConfusionMatrix {
    std::vector<std::string> labels;
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;  // truth x predicted

    std::int64_t total() const { return counts.sum(); }
    double accuracy() const {
        const std::int64_t t = total();
        return t == 0 ? 0.0
                      : static_cast<double>(counts.trace()) / static_cast<double>(t);
    }
    /// Correct fraction per true class; 0 when a class has no trials.
    Vectord per_class_accuracy() const {
        Vectord acc = Vectord::Zero(counts.rows());
        for (Index r = 0; r < counts.rows(); ++r) {
            const std::int64_t row_total = counts.row(r).sum();
            if (row_total > 0)
                acc[r] = static_cast<double>(counts(r, r)) / static_cast<double>(row_total);
        }
        return acc;
    }
};

inline ConfusionMatrix confusion(const std::vector<std::string>& predictions,
                                 const std::vector<std::string>& truths,
                                 const std::vector<std::string>& labels) {
    if (predictions.size() != truths.size())
        throw ConfigError("confusion: prediction/truth counts disagree");
    ConfusionMatrix cm;
    cm.labels = labels;
    cm.counts.setZero(static_cast<Index>(labels.size()), static_cast<Index>(labels.size()));
    auto index_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == name) return static_cast<Index>(i);
        throw DataError("confusion: label '" + name + "' is not in the label set");
    };
    for (std::size_t i = 0; i < truths.size(); ++i)
        ++cm.counts(index_of(truths[i]), index_of(predictions[i]));
    return cm;
}

struct CorrelationResult {
    double value = 0.0;
    bool degenerate = false;
};

/// Zero-lag Pearson correlation of two equal-length signals; zero-variance
/// inputs yield 0 with the degenerate flag set.
inline CorrelationResult cross_correlation(const Vectord& recovered, const Vectord& reference) {
    if (recovered.size() != reference.size())
        throw ConfigError("cross_correlation: length mismatch");
    if (recovered.size() < 2) throw ConfigError("cross_correlation: need at least two samples");
    const Vectord da = recovered.array() - recovered.mean();
    const Vectord db = reference.array() - reference.mean();
    const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
    if (denom <= 0.0) return {0.0, true};
    return {da.dot(db) / denom, false};
}

/// Magnitude of the DFT bin nearest `freq_hz` for every channel row
/// (rectangular window over the full segment).
inline Vectord spectral_component(const Matrixd& channels, double sample_rate_hz,
                                  double freq_hz = 100.0) {
    if (channels.cols() < 1) throw DataError("spectral_component: empty channels");
    if (!(sample_rate_hz > 0.0) || freq_hz < 0.0 || freq_hz > sample_rate_hz / 2.0)
        throw ConfigError("spectral_component: frequency outside [0, fs/2]");
    const Index n = channels.cols();
    const Index bin = static_cast<Index>(
        std::lround(freq_hz * static_cast<double>(n) / sample_rate_hz));
    Vectord magnitude(channels.rows());
    const double w = -2.0 * std::numbers::pi * static_cast<double>(bin) / static_cast<double>(n);
    for (Index ch = 0; ch < channels.rows(); ++ch) {
        std::complex<double> acc(0.0, 0.0);
        for (Index t = 0; t < n; ++t)
            acc += channels(ch, t) * std::polar(1.0, w * static_cast<double>(t));
        magnitude[ch] = std::abs(acc);
    }
    return magnitude;
}

/// The five binary phonological tasks. Consonant/vowel is restricted to the
/// seven phonemic prompts; the word prompts join a task only where their
/// transcription decides membership.
inline std::vector<BinaryTaskSpec> default_binary_tasks() {
    const std::set<std::string> phonemic(phonemic_labels().begin(), phonemic_labels().end());
    return {
        {"C/V", {"iy", "uw"}, phonemic},
        {"Nasal", {"m", "n", "gnaw", "knew"}, {}},
        {"Bilab", {"m", "piy", "pat", "pot"}, {}},
        {"iy", {"iy", "piy", "tiy", "diy"}, {}},
        {"uw", {"uw", "knew"}, {}},
    };
}

inline nlohmann::json binary_tasks_to_json(const std::vector<BinaryTaskSpec>& tasks) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : tasks) {
        nlohmann::json e;
        e["name"] = t.name;
        e["positive"] = std::vector<std::string>(t.positive.begin(), t.positive.end());
        if (!t.domain.empty())
            e["domain"] = std::vector<std::string>(t.domain.begin(), t.domain.end());
        j.push_back(std::move(e));
    }
    return j;
}

inline std::vector<BinaryTaskSpec> binary_tasks_from_json(const nlohmann::json& j) {
    try {
        std::vector<BinaryTaskSpec> tasks;
        for (const auto& e : j) {
            BinaryTaskSpec t;
            t.name = e.at("name").get<std::string>();
            const auto pos = e.at("positive").get<std::vector<std::string>>();
            t.positive.insert(pos.begin(), pos.end());
            if (e.contains("domain")) {
                const auto dom = e.at("domain").get<std::vector<std::string>>();
                t.domain.insert(dom.begin(), dom.end());
            }
            if (t.positive.empty())
                throw DataError("binary task '" + t.name + "' has an empty positive set");
            tasks.push_back(std::move(t));
        }
        return tasks;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed binary task config: ") + e.what());
    }
}

}  // namespace nes
