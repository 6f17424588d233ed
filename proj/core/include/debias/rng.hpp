#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace debias {

/// Counter-based SplitMix64 generator. The full state is (seed, counter), so
/// streams are identical across platforms and trivially checkpointed.
/// Distributions are implemented here rather than via <random> because the
/// standard distributions are not portable bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept;
    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n) noexcept;
    double normal() noexcept;
    bool bernoulli(double p) noexcept;

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_int(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Independent stream keyed by `stream`, leaving this generator untouched.
    Rng fork(std::uint64_t stream) const noexcept;

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

} // namespace debias
