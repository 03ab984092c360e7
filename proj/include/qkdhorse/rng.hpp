#pragma once

#include <cstdint>

namespace qkdhorse {

// SplitMix64 finalizer. Every random draw in the toolkit goes through this
// mix, so runs are reproducible bit-for-bit across platforms (no
// implementation-defined std::uniform_* distributions anywhere).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Named sub-streams. Each consumer of randomness gets its own stream so the
// draw for round i never depends on what other components drew, which is what
// makes in-process and networked runs line up for the same seeds.
enum class StreamTag : std::uint64_t {
    Slot = 1,
    Pol = 2,
    SettingAlice = 3,
    SettingBob = 4,
    NoiseAlice = 5,
    NoiseBob = 6,
    EtaAlice = 7,
    EtaBob = 8,
    HonestBit = 9,
    HonestFlip = 10,
    MaskAlice = 11,
    MaskBob = 12,
    TableLayout = 13,
    Search = 14,
};

// Counter-based stream: at(i) is a pure function of (seed, tag, i). Random
// access by round counter, no sequential state.
class Stream {
public:
    Stream() = default;
    Stream(std::uint64_t seed, StreamTag tag) noexcept
        : key_(mix64(seed ^ mix64(static_cast<std::uint64_t>(tag) * 0x9e3779b97f4a7c15ULL))) {}

    std::uint64_t at(std::uint64_t i) const noexcept { return mix64(key_ ^ mix64(i)); }

    // Second independent value for the same counter.
    std::uint64_t at2(std::uint64_t i) const noexcept {
        return mix64(at(i) ^ 0xda942042e4dd58b5ULL);
    }

    // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
    std::uint64_t bounded(std::uint64_t i, std::uint64_t n) const noexcept {
        return mulhi(at(i), n);
    }

    // Uniform double in [0, 1).
    double unit(std::uint64_t i) const noexcept { return (at(i) >> 11) * 0x1.0p-53; }

    bool bernoulli(std::uint64_t i, double p) const noexcept { return unit(i) < p; }

    static std::uint64_t mulhi(std::uint64_t x, std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * n) >> 64);
    }

private:
    std::uint64_t key_ = 0;
};

// Sequential splitmix64 generator for search loops and layout shuffles.
class SeqRng {
public:
    explicit SeqRng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t bounded(std::uint64_t n) noexcept { return Stream::mulhi(next(), n); }

    double unit() noexcept { return (next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

// Disjoint per-role seed derivation from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt) noexcept {
    return mix64(master ^ mix64(salt ^ 0xa5a5a5a5a5a5a5a5ULL));
}

} // namespace qkdhorse
