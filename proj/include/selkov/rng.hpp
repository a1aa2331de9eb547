#pragma once

// Counter-based random streams. Every draw is a pure function of
// (master seed, path key, step, mode, purpose, draw index), so ensembles are
// reproducible under any thread schedule.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace selkov {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return splitmix64(a ^ (splitmix64(b) + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2)));
}

/// Philox4x32-10 (Salmon et al., Random123).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key) noexcept {
        for (int r = 0; r < 10; ++r) {
            ctr = round(ctr, key);
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }

private:
    static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
        const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    }

    static Counter round(const Counter& c, const Key& k) noexcept {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(0xD2511F53u, c[0], hi0, lo0);
        mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// What a stream is used for; part of the counter so that different uses of
/// the same (path, step, mode) never overlap.
enum class StreamPurpose : std::uint32_t {
    Wiener = 1,
    Jumps = 2,
    InitialLaw = 3,
    Resampling = 4,
    TestFunctions = 5,
};

/// A sequential stream over one substream of the counter space.
class CounterStream {
public:
    CounterStream(std::uint64_t key, std::uint64_t step, std::uint32_t mode, StreamPurpose purpose) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          base_{0u, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32) ^ (mode << 16),
                static_cast<std::uint32_t>(purpose)} {}

    std::uint64_t next_u64() noexcept {
        if (pos_ >= 4) refill();
        const std::uint64_t hi = buffer_[pos_];
        const std::uint64_t lo = buffer_[pos_ + 1];
        pos_ += 2;
        return (hi << 32) | lo;
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double phi = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(phi);
        has_spare_ = true;
        return r * std::cos(phi);
    }

    /// Poisson(mean): inversion for small means, PTRS (Hoermann 1993) otherwise.
    std::uint64_t poisson(double mean) noexcept {
        if (!(mean > 0.0)) return 0;
        if (mean < 10.0) {
            const double u = uniform();
            double p = std::exp(-mean);
            double cdf = p;
            std::uint64_t k = 0;
            while (u > cdf && k < 10000) {
                ++k;
                p *= mean / static_cast<double>(k);
                cdf += p;
                if (p == 0.0) break;
            }
            return k;
        }
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double U = uniform() - 0.5;
            const double V = uniform();
            const double us = 0.5 - std::abs(U);
            const double k = std::floor((2.0 * a / us + b) * U + mean + 0.43);
            if (us >= 0.07 && V <= vr) return static_cast<std::uint64_t>(k);
            if (k < 0.0 || (us < 0.013 && V > us)) continue;
            if (std::log(V) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                -mean + k * loglam - std::lgamma(k + 1.0))
                return static_cast<std::uint64_t>(k);
        }
    }

private:
    void refill() noexcept {
        auto ctr = base_;
        ctr[0] = block_++;
        buffer_ = Philox4x32::generate(ctr, key_);
        pos_ = 0;
    }

    Philox4x32::Key key_;
    Philox4x32::Counter base_;
    std::array<std::uint32_t, 4> buffer_{};
    std::uint32_t block_ = 0;
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SeedSpec {
    std::uint64_t master_seed = 0;

    /// Key of the substream family belonging to one trajectory.
    std::uint64_t path_key(std::uint64_t path) const noexcept { return hash_combine(master_seed, path); }

    bool operator==(const SeedSpec&) const = default;
};

}  // namespace selkov
