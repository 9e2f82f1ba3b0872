#pragma once

#include <cstdint>
#include <vector>

namespace gatera {

// Deterministic, platform-independent PRNG (splitmix64). Every random draw in
// the project goes through this class so that fixed seeds give bitwise
// reproducible runs regardless of the standard library in use.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 usable bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Modulo bias is < 2^-50 for the desk-scale n
    // used here.
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    // Independent substream derived from the current state; the parent stream
    // is not advanced.
    Rng fork(std::uint64_t stream) const {
        Rng child(state_ ^ (0xA0761D6478BD642FULL * (stream + 1)));
        child.next_u64();
        return child;
    }

    // Fisher-Yates; std::shuffle is implementation-defined, this is not.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

   private:
    std::uint64_t state_;
};

}  // namespace gatera
