#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qkdhorse/channel.hpp"
#include "qkdhorse/device.hpp"
#include "qkdhorse/rational.hpp"
#include "qkdhorse/table.hpp"

namespace qkdhorse {

// Broadcast after each round: detection flag and setting, never the result.
struct ClassicalMessage {
    std::uint64_t seq = 0;
    Role sender = Role::Alice;
    bool detected = false;
    Setting setting;
};

struct SiftedKey {
    std::vector<int> bits;
    std::vector<std::uint64_t> seqs;

    std::size_t size() const { return bits.size(); }
};

struct EmptyCell : Error {
    EmptyCell() : Error("correlation cell has no double detections") {}
};

struct CorrelationEstimate {
    int sa = 0;
    int sb = 0;
    std::int64_t n_same = 0;
    std::int64_t n_diff = 0;

    std::int64_t total() const { return n_same + n_diff; }
    double e_value() const {
        return static_cast<double>(n_same - n_diff) / static_cast<double>(total());
    }
    double std_err() const {
        const double e = e_value();
        return std::sqrt((1.0 - e * e) / static_cast<double>(total()));
    }
    Rational exact() const { return Rational(n_same - n_diff, total()); }
};

CorrelationEstimate estimate_correlation(int sa, int sb, std::int64_t n_same, std::int64_t n_diff);

struct ChshReport {
    CorrelationEstimate e_ab, e_gb, e_gd, e_ad;
    double s_value = 0.0;
    double s_std_err = 0.0;
    bool violated = false;
};

// S = |E(a,b) + E(g,b)| + |E(g,d) - E(a,d)|, CHSH bound 2.
ChshReport chsh(const CorrelationEstimate& e_ab, const CorrelationEstimate& e_gb,
                const CorrelationEstimate& e_gd, const CorrelationEstimate& e_ad);

struct KeyLengthMismatch : Error {
    KeyLengthMismatch() : Error("sifted keys differ in length") {}
};
struct EmptyKey : Error {
    EmptyKey() : Error("sifted key is empty") {}
};

double qber(const SiftedKey& a, const SiftedKey& b);

// One transcript row per round; slot < 0 serializes as null.
struct RoundRow {
    std::uint64_t q = 0;
    std::int64_t slot = -1;
    int sa = 0;
    int sb = 0;
    Outcome oa = Outcome::NoDetect;
    Outcome ob = Outcome::NoDetect;
};

struct IncompleteTranscript : Error {
    explicit IncompleteTranscript(const std::string& why)
        : Error("incomplete transcript: " + why) {}
};

struct SiftResult {
    SiftedKey key_a;
    SiftedKey key_b;
    // Rounds available for the four CHSH cells (ab, gb, gd, ad), disjoint
    // from the key rounds by construction.
    std::array<std::vector<std::uint64_t>, 4> chsh_subsets;
};

SiftResult sift(const std::vector<RoundRow>& rows);
SiftResult sift(const std::vector<ClassicalMessage>& messages,
                const std::vector<DetectionRecord>& records_a,
                const std::vector<DetectionRecord>& records_b);

struct SessionConfig {
    ChannelConfig channel; // channel.seed drives the source streams
    std::uint64_t rounds = 0;
    const TablePair* tables = nullptr;
    double mask_kappa = 1.0;
    // Round before which a TrojanActivate initiation is delivered. Table
    // backends default to activation at round 0 when unset.
    std::optional<std::uint64_t> activation_round;
    bool sweep_settings = false; // deterministic slot x setting-pair sweep
    std::uint64_t seed_alice = 0;
    std::uint64_t seed_bob = 0;
    std::uint64_t session_id = 1;
};

struct SessionTranscript {
    std::vector<RoundRow> rounds;
    SiftedKey key_a;
    SiftedKey key_b;
    std::array<std::array<CorrelationEstimate, 4>, 4> cells{}; // all 16 E(j,k)
    ChshReport chsh_report;
    double qber_value = 0.0;
    std::int64_t detections_a = 0;
    std::int64_t detections_b = 0;
    std::int64_t both_detected = 0;
    DeviceMode final_mode_a = DeviceMode::QkdMode;
    DeviceMode final_mode_b = DeviceMode::QkdMode;
};

SessionTranscript run_session(const SessionConfig& config);

// Sifting, estimates, CHSH and QBER for an already-collected round list.
SessionTranscript analyze_rounds(std::vector<RoundRow> rows);

std::string format_round(const RoundRow& row); // one JSON object, no newline
void write_transcript(const std::vector<RoundRow>& rows, const std::string& path);
std::vector<RoundRow> read_transcript(const std::string& path);

} // namespace qkdhorse
