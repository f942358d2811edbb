#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>

namespace dombert {

// Independent random streams derived from the single run seed.
enum class Stream : std::uint64_t {
    kInit = 1,
    kSampler = 2,
    kMasking = 3,
    kDropout = 4,
    kSynthetic = 5,
    kEval = 6,
    kBench = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Sub-seed for `stream` at position `counter`: splitmix64 applied to
/// seed, stream id and counter in sequence. Every component and the CLI use
/// this scheme, so a component test seeded the same way as a CLI run sees the
/// same random numbers.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    return splitmix64(h ^ counter);
}

/// Thin wrapper over mt19937_64 with distribution code written out
/// explicitly, so sequences do not depend on the standard library vendor.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling removes modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Standard normal via Box-Muller; one value per call.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = below(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string& text) {
        std::istringstream is(text);
        is >> engine_;
    }

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

  private:
    std::mt19937_64 engine_;
};

}  // namespace dombert
