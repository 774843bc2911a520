#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace msfcev {

// xoshiro256** seeded through splitmix64. Satisfies
// UniformRandomBitGenerator, so it plugs into <random> distributions.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    // Independent stream for item `index` of a batch seeded with `seed`.
    static Xoshiro256 substream(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t mix = seed ^ 0x243f6a8885a308d3ULL;
        const std::uint64_t a = splitmix64(mix);
        std::uint64_t idx = index + 0x13198a2e03707344ULL;
        const std::uint64_t b = splitmix64(idx);
        return Xoshiro256(a ^ (b * 0x9e3779b97f4a7c15ULL));
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace msfcev
