#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace nes {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrixd = Matrix<double>;
using Vectord = Vector<double>;
using Index = Eigen::Index;

// Expression-friendly read-only argument types. std::type_identity keeps the
// scalar out of deduction so it resolves from the model/layer parameter.
template <typename Scalar>
using MatrixCRef =
    Eigen::Ref<const Matrix<typename std::type_identity<Scalar>::type>>;
template <typename Scalar>
using VectorCRef =
    Eigen::Ref<const Vector<typename std::type_identity<Scalar>::type>>;

/// Invalid options, rates, or shape requests supplied by the caller.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or out-of-contract data encountered at run time.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Caller broke an API precondition (e.g. non-binary hidden state).
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Vector<Scalar> sigmoid(const Vector<Scalar>& x) {
    return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

// splitmix64 finalizer; derives independent substreams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic random source. The distributions are implemented here
/// (not via <random> adaptors) so that sequences depend only on the seed,
/// not on the standard library's unspecified algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed_ ? seed_ : 0x1b2f3c4d5e6f7a8bull) {
        // warm up splitmix so nearby seeds decorrelate
        next();
        next();
    }

    std::uint64_t next() {
        // xorshift64* keeps the generator self-contained and portable
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (cosine half only, keeps call order flat).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], safe for log
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Independent substream derived from the original seed and a tag;
    /// does not consume state from this generator.
    Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

    std::uint64_t seed() const { return seed_; }

    /// Fisher-Yates shuffle driven by this generator.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next() % i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace nes
