#include "qkdhorse/eve.hpp"

#include <unordered_map>

namespace qkdhorse {

std::vector<PublicRound> public_view(const std::vector<RoundRow>& rows) {
    std::vector<PublicRound> log;
    log.reserve(rows.size());
    for (const RoundRow& r : rows) {
        PublicRound p;
        p.q = r.q;
        p.slot = r.slot;
        p.det_a = detected(r.oa);
        p.det_b = detected(r.ob);
        p.sa = r.sa;
        p.sb = r.sb;
        log.push_back(p);
    }
    return log;
}

void attach_taps(std::vector<PublicRound>& log,
                 const std::vector<std::pair<std::uint64_t, int>>& taps) {
    std::unordered_map<std::uint64_t, int> by_seq(taps.begin(), taps.end());
    for (PublicRound& p : log) {
        auto it = by_seq.find(p.q);
        if (it != by_seq.end()) p.pol_tap = it->second;
    }
}

AttackReport reconstruct_key(const EveKnowledge& knowledge) {
    if (!knowledge.tables) throw MissingTables();
    bool any_timing = false;
    for (const PublicRound& p : knowledge.log)
        if (p.slot >= 0) {
            any_timing = true;
            break;
        }
    if (!knowledge.log.empty() && !any_timing) throw MissingTimings();

    AttackReport rep;
    std::int64_t key_rounds = 0;
    for (const PublicRound& p : knowledge.log) {
        if (!p.det_a || !p.det_b || p.sa != p.sb) continue;
        ++key_rounds;
        if (p.slot < 0) continue; // timing missed, round not covered
        const Outcome o = lookup(knowledge.tables->alice, p.slot, Setting{p.sa});
        int bit = detected(o) ? outcome_bit(o) : 0;
        if (knowledge.masked_backend && p.pol_tap >= 0) bit ^= p.pol_tap;
        rep.bits.emplace_back(p.q, bit);
    }
    rep.coverage = key_rounds > 0
                       ? static_cast<double>(rep.bits.size()) / static_cast<double>(key_rounds)
                       : 0.0;
    return rep;
}

void score_attack(AttackReport& report, const std::vector<RoundRow>& truth) {
    std::unordered_map<std::uint64_t, int> alice_bits;
    for (const RoundRow& r : truth)
        if (detected(r.oa) && detected(r.ob) && r.sa == r.sb) alice_bits[r.q] = outcome_bit(r.oa);

    std::int64_t hit = 0, scored = 0;
    for (const auto& [seq, bit] : report.bits) {
        auto it = alice_bits.find(seq);
        if (it == alice_bits.end()) continue;
        ++scored;
        if (it->second == bit) ++hit;
    }
    report.accuracy_vs_alice =
        scored > 0 ? static_cast<double>(hit) / static_cast<double>(scored) : 0.0;
}

int tap_polarization(const ChannelConfig& config, const PulseEvent& pulse) {
    if (config.backend != Backend::TrojanMasked) throw WrongBackend("tap_polarization");
    return pulse.polbit;
}

void inject_activation(SessionConfig& session, std::uint64_t at_round) {
    session.activation_round = at_round;
}

} // namespace qkdhorse
