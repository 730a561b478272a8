#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace mixboost {

/// Seeded random source with platform-independent transforms on top of
/// mt19937_64 (the standard distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Mixes a base seed with a tag (e.g. a station id) into an independent seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace mixboost
