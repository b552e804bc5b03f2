#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace autogcn {

/// Portable random source. The engine (mt19937_64) is fully specified by the
/// standard; the distributions below are implemented here rather than taken
/// from <random>, whose distribution algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }
    /// Standard normal via Box-Muller (no cached second draw).
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Independent streams derived from one run seed.
enum class Stream : std::uint64_t { init = 1, dropout = 2, split = 3, data = 4, batch = 5 };

std::uint64_t splitmix64(std::uint64_t x);
Rng make_stream(std::uint64_t seed, Stream stream);

}  // namespace autogcn
