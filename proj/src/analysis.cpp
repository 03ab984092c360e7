#include "qkdhorse/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qkdhorse {

namespace {

std::int64_t infer_n_slots(const std::vector<RoundRow>& rows) {
    std::int64_t max_slot = -1;
    for (const RoundRow& r : rows) max_slot = std::max(max_slot, r.slot);
    if (max_slot < 0) return 0;
    return ((max_slot / 8000) + 1) * 8000;
}

int slot_bin(std::int64_t slot, std::int64_t n_slots, int bins) {
    const std::int64_t width = n_slots / bins;
    const std::int64_t b = slot / width;
    return static_cast<int>(std::min<std::int64_t>(b, bins - 1));
}

} // namespace

Chi2Result slot_bit_test(const std::vector<RoundRow>& rows, std::int64_t n_slots, int bins) {
    if (n_slots <= 0) n_slots = infer_n_slots(rows);
    if (n_slots <= 0) throw InsufficientData("transcript carries no slot numbers");
    if (bins < 2 || bins > n_slots) throw Error("slot_bit_test: bad bin count");

    std::vector<std::vector<std::int64_t>> counts(bins, std::vector<std::int64_t>(2, 0));
    std::int64_t sifted = 0;
    for (const RoundRow& r : rows) {
        if (r.slot < 0 || !detected(r.oa) || !detected(r.ob) || r.sa != r.sb) continue;
        ++sifted;
        ++counts[slot_bin(r.slot, n_slots, bins)][outcome_bit(r.oa)];
    }
    if (sifted < 1000)
        throw InsufficientData("slot_bit_test needs >= 1000 sifted bits, got " +
                               std::to_string(sifted));
    return chi2_independence(counts);
}

Chi2Result slot_detect_test(const std::vector<RoundRow>& rows, std::int64_t n_slots, int bins) {
    if (n_slots <= 0) n_slots = infer_n_slots(rows);
    if (n_slots <= 0) throw InsufficientData("transcript carries no slot numbers");
    if (bins < 2 || bins > n_slots) throw Error("slot_detect_test: bad bin count");

    std::vector<std::vector<std::int64_t>> counts(bins, std::vector<std::int64_t>(2, 0));
    std::int64_t used = 0;
    for (const RoundRow& r : rows) {
        if (r.slot < 0) continue;
        ++used;
        ++counts[slot_bin(r.slot, n_slots, bins)][detected(r.oa) ? 1 : 0];
    }
    if (used < 1000)
        throw InsufficientData("slot_detect_test needs >= 1000 rounds with slots, got " +
                               std::to_string(used));
    return chi2_independence(counts);
}

double adjusted_chsh_bound(double eta) {
    if (!(eta > 0.0) || eta > 1.0) throw EtaOutOfRange(eta);
    return 4.0 / eta - 2.0;
}

AuditReport audit(const std::vector<RoundRow>& rows, std::int64_t n_slots, int bins) {
    if (rows.empty()) throw InsufficientData("empty transcript");
    if (n_slots <= 0) n_slots = infer_n_slots(rows);

    AuditReport rep;
    rep.rounds = static_cast<std::int64_t>(rows.size());

    SessionTranscript t = analyze_rounds(rows);
    rep.singles_rate_a = static_cast<double>(t.detections_a) / static_cast<double>(rep.rounds);
    rep.singles_rate_b = static_cast<double>(t.detections_b) / static_cast<double>(rep.rounds);
    rep.pair_rate = static_cast<double>(t.both_detected) / static_cast<double>(rep.rounds);
    rep.key_bits = static_cast<std::int64_t>(t.key_a.size());
    rep.sift_yield = static_cast<double>(rep.key_bits) / static_cast<double>(rep.rounds);
    rep.qber = t.qber_value;
    rep.s_value = t.chsh_report.s_value;
    rep.s_std_err = t.chsh_report.s_std_err;

    const double eta_hat = 0.5 * (rep.singles_rate_a + rep.singles_rate_b);
    rep.s_limit_at_eta = eta_hat > 0.0 ? adjusted_chsh_bound(std::min(eta_hat, 1.0))
                                       : std::numeric_limits<double>::infinity();
    rep.loophole_free = rep.s_value > rep.s_limit_at_eta;

    if (n_slots > 0) {
        rep.slot_bit = slot_bit_test(rows, n_slots, bins);
        rep.slot_detect = slot_detect_test(rows, n_slots, bins);
    }
    return rep;
}

} // namespace qkdhorse
