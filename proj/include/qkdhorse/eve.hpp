#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qkdhorse/channel.hpp"
#include "qkdhorse/protocol.hpp"
#include "qkdhorse/table.hpp"

namespace qkdhorse {

// What the eavesdropper can see for one round: the public announcements plus
// the pulse emission timing. Never the measured bits.
struct PublicRound {
    std::uint64_t q = 0;
    std::int64_t slot = -1; // -1: timing not observed
    bool det_a = false;
    bool det_b = false;
    int sa = 0;
    int sb = 0;
    int pol_tap = -1; // -1: no polarization tap for this round
};

struct EveKnowledge {
    const TablePair* tables = nullptr;
    std::vector<PublicRound> log;
    bool masked_backend = false;
};

struct MissingTables : Error {
    MissingTables() : Error("eavesdropper has no translation tables") {}
};
struct MissingTimings : Error {
    MissingTimings() : Error("eavesdropper observed no pulse timings") {}
};

struct AttackReport {
    std::vector<std::pair<std::uint64_t, int>> bits; // seq -> predicted key bit
    double coverage = 0.0;           // fraction of sifted-key rounds predicted
    double accuracy_vs_alice = -1.0; // filled by score_attack; -1 = unscored
};

// Strips a transcript down to what is publicly observable. Slot numbers are
// kept as Eve's pulse-timing observations; outcome bits are dropped.
std::vector<PublicRound> public_view(const std::vector<RoundRow>& rows);

// Attaches tap results to masked-backend observations.
void attach_taps(std::vector<PublicRound>& log, const std::vector<std::pair<std::uint64_t, int>>& taps);

// Predicts every announced both-detected equal-settings bit from the tables
// and the public log alone.
AttackReport reconstruct_key(const EveKnowledge& knowledge);

// Harness-side scoring of a reconstruction against Alice's actual bits.
void score_attack(AttackReport& report, const std::vector<RoundRow>& truth);

// Reads the shared polarization bit of a masked-backend pulse. The tap is
// aligned with the preparation basis, so it is exact and leaves the receivers'
// statistics untouched.
int tap_polarization(const ChannelConfig& config, const PulseEvent& pulse);

// Arms the next initiation pulse of a session with TrojanActivate.
void inject_activation(SessionConfig& session, std::uint64_t at_round = 0);

} // namespace qkdhorse
