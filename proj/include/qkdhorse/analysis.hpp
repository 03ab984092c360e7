#pragma once

#include <cstdint>
#include <vector>

#include "qkdhorse/protocol.hpp"
#include "qkdhorse/stats.hpp"

namespace qkdhorse {

struct InsufficientData : Error {
    explicit InsufficientData(const std::string& why) : Error("insufficient data: " + why) {}
};

struct EtaOutOfRange : Error {
    explicit EtaOutOfRange(double eta)
        : Error("eta must be in (0,1], got " + std::to_string(eta)) {}
};

// Chi-square independence test between coarse slot bin (bins ranges of
// n_slots/bins slots) and the sifted key bit. Needs >= 1000 sifted bits.
Chi2Result slot_bit_test(const std::vector<RoundRow>& rows, std::int64_t n_slots, int bins = 16);

// Same binning, response variable is Alice's detection flag over all rounds.
Chi2Result slot_detect_test(const std::vector<RoundRow>& rows, std::int64_t n_slots, int bins = 16);

// Ceiling on the CHSH sum reachable by a local model whose per-arm detection
// rate is eta: 4/eta - 2. Equals 2 at eta = 1 and 2*sqrt(2) at eta =
// 2/(1+sqrt(2)) ~ 0.8284.
double adjusted_chsh_bound(double eta);

struct AuditReport {
    Chi2Result slot_bit;
    Chi2Result slot_detect;
    double singles_rate_a = 0.0;
    double singles_rate_b = 0.0;
    double pair_rate = 0.0;
    double sift_yield = 0.0;
    std::int64_t rounds = 0;
    std::int64_t key_bits = 0;
    double qber = 0.0;
    double s_value = 0.0;
    double s_std_err = 0.0;
    double s_limit_at_eta = 0.0;
    bool loophole_free = false; // S exceeds the bound at the measured rate
};

// Full audit of a transcript: slot-dependence tests, rates, CHSH, and the
// efficiency-adjusted verdict. n_slots = 0 infers the table size from the
// largest slot present.
AuditReport audit(const std::vector<RoundRow>& rows, std::int64_t n_slots = 0, int bins = 16);

} // namespace qkdhorse
