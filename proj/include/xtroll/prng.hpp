#pragma once

#include <cstdint>
#include <vector>

namespace xtroll {

/// splitmix64 generator. Chosen for bit-exact cross-platform streams from a
/// 64-bit seed; the full state is a single u64.
class Prng {
  public:
    explicit Prng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    // tiny relative to 2^64, bias is unobservable at corpus scale but we
    // still reject to keep the stream exactly uniform.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Integer in [lo, hi] inclusive.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    // Index into a discrete distribution given by non-negative weights.
    std::size_t next_weighted(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double r = next_double() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (r < acc) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derives an independent stream for a named sub-task without consuming
    // from this stream's sequence.
    Prng fork(std::uint64_t stream_id) const {
        return Prng(state_ ^ (0xA0761D6478BD642FULL * (stream_id + 1)));
    }

  private:
    std::uint64_t state_;
};

}  // namespace xtroll
