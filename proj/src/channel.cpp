#include "qkdhorse/channel.hpp"

#include <cmath>

#include "qkdhorse/rng.hpp"

namespace qkdhorse {

PulseEvent emit(const ChannelConfig& config, std::uint64_t seq) {
    PulseEvent p;
    p.seq = seq;
    if (config.n_slots > 0) {
        if (config.slot_policy == SlotPolicy::Cyclic) {
            p.slot = static_cast<std::int64_t>(seq % static_cast<std::uint64_t>(config.n_slots));
        } else {
            Stream slots(config.seed, StreamTag::Slot);
            p.slot = static_cast<std::int64_t>(
                slots.bounded(seq, static_cast<std::uint64_t>(config.n_slots)));
        }
    }
    if (config.backend == Backend::TrojanMasked) {
        Stream pol(config.seed, StreamTag::Pol);
        p.polbit = static_cast<int>(pol.at(seq) & 1);
    }
    return p;
}

ResolvedRound resolve_honest(const ChannelConfig& config, std::uint64_t seq, Setting a, Setting b) {
    if (config.backend != Backend::Honest) throw WrongBackend("resolve_honest");
    const double delta_deg = std::fabs(a.angle_deg() - b.angle_deg());
    const double delta_rad = delta_deg * M_PI / 180.0;
    const double sin2 = std::sin(delta_rad) * std::sin(delta_rad);

    Stream bit(config.seed, StreamTag::HonestBit);
    Stream flip(config.seed, StreamTag::HonestFlip);
    Stream eta_a(config.seed, StreamTag::EtaAlice);
    Stream eta_b(config.seed, StreamTag::EtaBob);

    const int raw_a = static_cast<int>(bit.at(seq) & 1);
    const int raw_b = flip.bernoulli(seq, sin2) ? 1 - raw_a : raw_a;

    ResolvedRound r;
    r.seq = seq;
    r.alice = eta_a.bernoulli(seq, config.eta) ? bit_outcome(raw_a) : Outcome::NoDetect;
    r.bob = eta_b.bernoulli(seq, config.eta) ? bit_outcome(raw_b) : Outcome::NoDetect;
    return r;
}

Outcome trojan_arm_outcome(const ChannelConfig& config, const TranslationTable& table,
                           const PulseEvent& pulse, Setting setting, Role arm,
                           std::uint64_t arm_seed) {
    if (config.backend == Backend::Honest) throw WrongBackend("trojan_arm_outcome");
    if (pulse.slot < 0 || pulse.slot >= table.n_slots)
        throw SlotOutOfRange(pulse.slot, table.n_slots);

    if (config.eta < 1.0) {
        Stream eta(arm_seed, arm == Role::Alice ? StreamTag::EtaAlice : StreamTag::EtaBob);
        if (!eta.bernoulli(pulse.seq, config.eta)) return Outcome::NoDetect;
    }

    Outcome o = lookup(table, pulse.slot, setting);
    if (!detected(o)) return o;

    int b = outcome_bit(o);
    if (config.backend == Backend::TrojanMasked) b ^= pulse.polbit;
    if (config.noise_q > 0.0) {
        Stream noise(arm_seed, arm == Role::Alice ? StreamTag::NoiseAlice : StreamTag::NoiseBob);
        if (noise.bernoulli(pulse.seq, config.noise_q)) b ^= 1;
    }
    return bit_outcome(b);
}

ResolvedRound resolve_trojan(const ChannelConfig& config, const TablePair& tables,
                             const PulseEvent& pulse, Setting a, Setting b,
                             std::uint64_t seed_alice, std::uint64_t seed_bob) {
    ResolvedRound r;
    r.seq = pulse.seq;
    r.alice = trojan_arm_outcome(config, tables.alice, pulse, a, Role::Alice, seed_alice);
    r.bob = trojan_arm_outcome(config, tables.bob, pulse, b, Role::Bob, seed_bob);
    return r;
}

} // namespace qkdhorse
