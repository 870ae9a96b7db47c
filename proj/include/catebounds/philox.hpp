#pragma once

// Counter-based random number generation (Philox4x64-10). Streams are keyed by
// (seed, stream id) and advance a 256-bit counter, so draws for distinct work
// items are independent of generation order and safe to produce in parallel.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace catebounds {

namespace detail {

inline void mulhilo64(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

}  // namespace detail

struct Philox4x64 {
    static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
    static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
    static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
    static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

    using Counter = std::array<std::uint64_t, 4>;
    using Key = std::array<std::uint64_t, 2>;

    static Counter round(const Counter& c, const Key& k) {
        std::uint64_t hi0, lo0, hi1, lo1;
        detail::mulhilo64(kMul0, c[0], hi0, lo0);
        detail::mulhilo64(kMul1, c[2], hi1, lo1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    // 10 rounds; the key is bumped between rounds.
    static Counter block(Counter c, Key k) {
        c = round(c, k);
        for (int r = 1; r < 10; ++r) {
            k[0] += kWeyl0;
            k[1] += kWeyl1;
            c = round(c, k);
        }
        return c;
    }
};

// One logical stream of uniform bits: key = (seed, stream).
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{seed, stream}, counter_{0, 0, 0, 0} {}

    std::uint64_t next_u64() {
        if (pos_ == 4) {
            buffer_ = Philox4x64::block(counter_, key_);
            increment_counter();
            pos_ = 0;
        }
        return buffer_[pos_++];
    }

    // [0, 1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1): never returns an exact endpoint, safe for inverse-CDF transforms.
    double open01() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = open01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        cached_normal_ = r * std::sin(theta);
        have_cached_normal_ = true;
        return r * std::cos(theta);
    }

    // Laplace(0, 1) via inverse CDF.
    double laplace() {
        double u = open01() - 0.5;
        return u < 0 ? std::log1p(2.0 * u) : -std::log1p(-2.0 * u);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v < threshold);
        return v % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    void increment_counter() {
        for (int i = 0; i < 4; ++i) {
            if (++counter_[i] != 0) break;
        }
    }

    Philox4x64::Key key_;
    Philox4x64::Counter counter_;
    std::array<std::uint64_t, 4> buffer_{};
    int pos_ = 4;
    double cached_normal_ = 0.0;
    bool have_cached_normal_ = false;
};

// Stateless seed derivation for independent sub-tasks.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    Philox4x64::Counter ctr{a, b, c, 0x5EEDULL};
    Philox4x64::Key key{root, Philox4x64::kWeyl0};
    return Philox4x64::block(ctr, key)[0];
}

}  // namespace catebounds
