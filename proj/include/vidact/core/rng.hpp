#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace vidact {

/// Counter-based generator: draw number `position` of stream `seed` is a pure
/// function of the pair, so the state is fully described by two integers and
/// is portable across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t position = 0)
        : seed_(seed), position_(position) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t position() const noexcept { return position_; }

    std::uint64_t next_u64() noexcept { return mix(seed_, position_++); }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    double normal() noexcept {
        // Box-Muller; one output per pair keeps the stream position simple.
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n) noexcept {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    double gumbel() noexcept { return -std::log(-std::log(uniform())); }

    template <typename T>
    void shuffle(std::vector<T>& items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

    /// Independent stream derived from this one without advancing it.
    Rng derive(std::uint64_t salt) const noexcept {
        return Rng(mix(seed_ ^ 0x5bf03635f0f5e4a1ULL, salt), 0);
    }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t counter) noexcept {
        std::uint64_t z = seed + (counter + 1) * 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        // second round decorrelates nearby seeds
        z += seed * 0xd6e8feb86659fd93ULL;
        z = (z ^ (z >> 32)) * 0xd6e8feb86659fd93ULL;
        return z ^ (z >> 32);
    }

    std::uint64_t seed_;
    std::uint64_t position_;
};

/// FNV-1a; used to salt per-name streams so draws do not depend on declaration order.
inline std::uint64_t stable_hash(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace vidact
