#pragma once

#include <cstdint>

#include "qkdhorse/table.hpp"
#include "qkdhorse/types.hpp"

namespace qkdhorse {

enum class Backend { Honest, Trojan, TrojanMasked };
enum class SlotPolicy { UniformRandom, Cyclic };

struct ChannelConfig {
    Backend backend = Backend::Honest;
    std::int64_t n_slots = 8000; // 0 = source does not expose timing
    SlotPolicy slot_policy = SlotPolicy::UniformRandom;
    double eta = 1.0;     // per-arm upstream detection efficiency
    double noise_q = 0.0; // per-arm bit flip probability (table backends)
    std::uint64_t seed = 0;
};

// One source emission. slot < 0 means the source exposes no timing.
struct PulseEvent {
    std::uint64_t seq = 0;
    std::int64_t slot = -1;
    int polbit = 0; // shared per-pair polarization bit (masked backend)
};

struct ResolvedRound {
    std::uint64_t seq = 0;
    Outcome alice = Outcome::NoDetect;
    Outcome bob = Outcome::NoDetect;
};

struct WrongBackend : Error {
    explicit WrongBackend(const std::string& op) : Error(op + ": wrong channel backend") {}
};

// Deterministic in (seed, seq). Slot drawn per policy when n_slots > 0;
// polbit drawn only for the masked backend.
PulseEvent emit(const ChannelConfig& config, std::uint64_t seq);

// Joint sampling of an entangled pair at analyzer angles a, b: identical raw
// bits with probability cos^2(delta), so E(delta) = cos(2*delta) in
// expectation. Each arm then reports NoDetect with probability 1 - eta.
ResolvedRound resolve_honest(const ChannelConfig& config, std::uint64_t seq, Setting a, Setting b);

// One arm of the table channel: upstream efficiency draw, table lookup at the
// arm's own setting, polarization mask, per-arm noise flip. Reads nothing
// from the other arm; efficiency and noise draws come from arm_seed, the
// receiving device's own seed.
Outcome trojan_arm_outcome(const ChannelConfig& config, const TranslationTable& table,
                           const PulseEvent& pulse, Setting setting, Role arm,
                           std::uint64_t arm_seed);

ResolvedRound resolve_trojan(const ChannelConfig& config, const TablePair& tables,
                             const PulseEvent& pulse, Setting a, Setting b,
                             std::uint64_t seed_alice, std::uint64_t seed_bob);

} // namespace qkdhorse
