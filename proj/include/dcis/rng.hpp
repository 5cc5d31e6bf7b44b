#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace dcis {

// Deterministic random stream. Wraps std::mt19937_64 (whose output sequence is
// pinned by the standard) and supplies its own distributions, since the
// standard distribution objects are implementation-defined and would break
// byte-for-byte reproducibility across toolchains.
//
// Independent substreams are derived from the *construction* seed plus a name,
// so the derivation does not depend on how many values the parent has drawn.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(scramble(seed)) {}

    // Derived stream; deterministic in (seed, name) and (seed, name, index).
    Rng child(std::string_view name) const { return Rng(mix(seed_, name)); }
    Rng child(std::string_view name, std::uint64_t index) const {
        return Rng(scramble(mix(seed_, name) ^ scramble(index + 0x9e3779b97f4a7c15ULL)));
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Uniform integer in [lo, hi], inclusive, unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next_u64());  // full span
        const std::uint64_t reject_below = (0 - range) % range;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r < reject_below);
        return lo + static_cast<std::int64_t>(r % range);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (the cosine branch only, so one draw pair
    // per call and no hidden cache state).
    double normal();

    // Draw an index from a discrete distribution given by non-negative weights.
    std::size_t weighted_index(const std::vector<double>& weights);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string save_state() const;
    void restore_state(const std::string& state);

private:
    static std::uint64_t scramble(std::uint64_t x);
    static std::uint64_t mix(std::uint64_t seed, std::string_view name);

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace dcis
