#include "qkdhorse/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "qkdhorse/rng.hpp"

namespace qkdhorse {

namespace {

// The four CHSH cells as (alice setting, bob setting).
constexpr std::array<std::pair<int, int>, 4> kChshCells{
    {{0, 1}, {2, 1}, {2, 3}, {0, 3}}};

int chsh_cell_index(int sa, int sb) {
    for (int i = 0; i < 4; ++i)
        if (kChshCells[i].first == sa && kChshCells[i].second == sb) return i;
    return -1;
}

} // namespace

CorrelationEstimate estimate_correlation(int sa, int sb, std::int64_t n_same, std::int64_t n_diff) {
    if (n_same + n_diff <= 0) throw EmptyCell();
    CorrelationEstimate e;
    e.sa = sa;
    e.sb = sb;
    e.n_same = n_same;
    e.n_diff = n_diff;
    return e;
}

ChshReport chsh(const CorrelationEstimate& e_ab, const CorrelationEstimate& e_gb,
                const CorrelationEstimate& e_gd, const CorrelationEstimate& e_ad) {
    ChshReport r;
    r.e_ab = e_ab;
    r.e_gb = e_gb;
    r.e_gd = e_gd;
    r.e_ad = e_ad;
    r.s_value = std::fabs(e_ab.e_value() + e_gb.e_value()) +
                std::fabs(e_gd.e_value() - e_ad.e_value());
    r.s_std_err = std::sqrt(e_ab.std_err() * e_ab.std_err() + e_gb.std_err() * e_gb.std_err() +
                            e_gd.std_err() * e_gd.std_err() + e_ad.std_err() * e_ad.std_err());
    r.violated = r.s_value > 2.0;
    return r;
}

double qber(const SiftedKey& a, const SiftedKey& b) {
    if (a.size() != b.size()) throw KeyLengthMismatch();
    if (a.size() == 0) throw EmptyKey();
    std::int64_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.bits[i] != b.bits[i]) ++diff;
    return static_cast<double>(diff) / static_cast<double>(a.size());
}

SiftResult sift(const std::vector<RoundRow>& rows) {
    SiftResult res;
    for (const RoundRow& row : rows) {
        if (!detected(row.oa) || !detected(row.ob)) continue;
        if (row.sa == row.sb) {
            res.key_a.bits.push_back(outcome_bit(row.oa));
            res.key_a.seqs.push_back(row.q);
            res.key_b.bits.push_back(outcome_bit(row.ob));
            res.key_b.seqs.push_back(row.q);
        } else {
            const int cell = chsh_cell_index(row.sa, row.sb);
            if (cell >= 0) res.chsh_subsets[cell].push_back(row.q);
        }
    }
    return res;
}

SiftResult sift(const std::vector<ClassicalMessage>& messages,
                const std::vector<DetectionRecord>& records_a,
                const std::vector<DetectionRecord>& records_b) {
    std::map<std::uint64_t, RoundRow> rows;
    for (const DetectionRecord& r : records_a) {
        RoundRow& row = rows[r.seq];
        row.q = r.seq;
        row.sa = r.setting.index;
        row.oa = r.outcome;
    }
    for (const DetectionRecord& r : records_b) {
        RoundRow& row = rows[r.seq];
        row.q = r.seq;
        row.sb = r.setting.index;
        row.ob = r.outcome;
    }
    // Announcements must cover every recorded round for both senders.
    std::map<std::uint64_t, int> seen;
    for (const ClassicalMessage& m : messages)
        seen[m.seq] |= m.sender == Role::Alice ? 1 : 2;
    for (const auto& [seq, row] : rows) {
        (void)row;
        auto it = seen.find(seq);
        if (it == seen.end() || it->second != 3)
            throw IncompleteTranscript("missing announcement for round " + std::to_string(seq));
    }
    std::vector<RoundRow> flat;
    flat.reserve(rows.size());
    for (auto& [seq, row] : rows) {
        (void)seq;
        flat.push_back(row);
    }
    return sift(flat);
}

SessionTranscript analyze_rounds(std::vector<RoundRow> rows) {
    SessionTranscript t;
    std::array<std::array<std::int64_t, 4>, 4> same{}, diff{};
    for (const RoundRow& row : rows) {
        if (detected(row.oa)) ++t.detections_a;
        if (detected(row.ob)) ++t.detections_b;
        if (detected(row.oa) && detected(row.ob)) {
            ++t.both_detected;
            if (row.oa == row.ob)
                ++same[row.sa][row.sb];
            else
                ++diff[row.sa][row.sb];
        }
    }
    for (int j = 0; j < 4; ++j) {
        for (int k = 0; k < 4; ++k) {
            t.cells[j][k].sa = j;
            t.cells[j][k].sb = k;
            t.cells[j][k].n_same = same[j][k];
            t.cells[j][k].n_diff = diff[j][k];
        }
    }

    SiftResult sifted = sift(rows);
    t.key_a = std::move(sifted.key_a);
    t.key_b = std::move(sifted.key_b);
    t.qber_value = t.key_a.size() > 0 ? qber(t.key_a, t.key_b) : 0.0;

    bool cells_ok = true;
    for (const auto& [sa, sb] : kChshCells)
        if (t.cells[sa][sb].total() <= 0) cells_ok = false;
    if (cells_ok)
        t.chsh_report = chsh(t.cells[0][1], t.cells[2][1], t.cells[2][3], t.cells[0][3]);

    t.rounds = std::move(rows);
    return t;
}

SessionTranscript run_session(const SessionConfig& config) {
    if (config.rounds == 0) throw Error("run_session: rounds must be >= 1");
    const bool table_backend = config.channel.backend != Backend::Honest;
    if (table_backend && !config.tables) throw Error("run_session: table backend needs tables");
    if (!table_backend && config.activation_round)
        throw Error("run_session: activation requires a table backend");

    std::optional<std::uint64_t> activate_at = config.activation_round;
    if (table_backend && !activate_at) activate_at = 0;

    ChannelConfig honest_cfg = config.channel;
    honest_cfg.backend = Backend::Honest;

    ReceiverState dev_a{Role::Alice, DeviceMode::QkdMode,
                        config.tables ? &config.tables->alice : nullptr, config.mask_kappa,
                        config.seed_alice, 0};
    ReceiverState dev_b{Role::Bob, DeviceMode::QkdMode,
                        config.tables ? &config.tables->bob : nullptr, config.mask_kappa,
                        config.seed_bob, 0};
    dev_a = handle_initiation(dev_a, {PulseKind::Normal, config.session_id});
    dev_b = handle_initiation(dev_b, {PulseKind::Normal, config.session_id});

    std::vector<RoundRow> rows;
    rows.reserve(config.rounds);
    const std::int64_t n_slots = config.channel.n_slots;

    for (std::uint64_t seq = 0; seq < config.rounds; ++seq) {
        if (activate_at && seq == *activate_at) {
            const InitiationPulse act{PulseKind::TrojanActivate, config.session_id};
            dev_a = handle_initiation(dev_a, act);
            dev_b = handle_initiation(dev_b, act);
        }

        Setting sa, sb;
        if (config.sweep_settings && n_slots > 0) {
            const std::uint64_t cell = (seq / static_cast<std::uint64_t>(n_slots)) % 16;
            sa = Setting{static_cast<int>(cell / 4)};
            sb = Setting{static_cast<int>(cell % 4)};
        } else {
            sa = choose_setting(dev_a, seq);
            sb = choose_setting(dev_b, seq);
        }

        const PulseEvent pulse = emit(config.channel, seq);
        RoundRow row;
        row.q = seq;
        row.slot = pulse.slot;
        row.sa = sa.index;
        row.sb = sb.index;

        if (dev_a.mode == DeviceMode::QkdMode || dev_b.mode == DeviceMode::QkdMode) {
            const ResolvedRound honest = resolve_honest(honest_cfg, seq, sa, sb);
            row.oa = dev_a.mode == DeviceMode::QkdMode
                         ? measure(dev_a, config.channel, QkdHalf{seq, honest.alice}, sa).outcome
                         : measure(dev_a, config.channel, pulse, sa).outcome;
            row.ob = dev_b.mode == DeviceMode::QkdMode
                         ? measure(dev_b, config.channel, QkdHalf{seq, honest.bob}, sb).outcome
                         : measure(dev_b, config.channel, pulse, sb).outcome;
        } else {
            row.oa = measure(dev_a, config.channel, pulse, sa).outcome;
            row.ob = measure(dev_b, config.channel, pulse, sb).outcome;
        }
        rows.push_back(row);
    }

    SessionTranscript t = analyze_rounds(std::move(rows));
    t.final_mode_a = dev_a.mode;
    t.final_mode_b = dev_b.mode;
    return t;
}

std::string format_round(const RoundRow& row) {
    char buf[160];
    if (row.slot >= 0) {
        std::snprintf(buf, sizeof(buf),
                      "{\"q\":%llu,\"slot\":%lld,\"sa\":%d,\"sb\":%d,\"oa\":\"%c\",\"ob\":\"%c\"}",
                      static_cast<unsigned long long>(row.q), static_cast<long long>(row.slot),
                      row.sa, row.sb, outcome_char(row.oa), outcome_char(row.ob));
    } else {
        std::snprintf(buf, sizeof(buf),
                      "{\"q\":%llu,\"slot\":null,\"sa\":%d,\"sb\":%d,\"oa\":\"%c\",\"ob\":\"%c\"}",
                      static_cast<unsigned long long>(row.q), row.sa, row.sb,
                      outcome_char(row.oa), outcome_char(row.ob));
    }
    return buf;
}

void write_transcript(const std::vector<RoundRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    for (const RoundRow& row : rows) out << format_round(row) << "\n";
    if (!out) throw Error("write failed: " + path);
}

namespace {

Outcome parse_outcome(const nlohmann::json& j, const char* field, int line) {
    const std::string s = j.at(field).get<std::string>();
    if (s.size() != 1 || (s[0] != '0' && s[0] != '1' && s[0] != '.'))
        throw IncompleteTranscript("bad " + std::string(field) + " at line " + std::to_string(line));
    return s[0] == '0' ? Outcome::Zero : s[0] == '1' ? Outcome::One : Outcome::NoDetect;
}

} // namespace

std::vector<RoundRow> read_transcript(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::vector<RoundRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IncompleteTranscript("unparsable line " + std::to_string(lineno) + ": " +
                                       e.what());
        }
        try {
            RoundRow row;
            row.q = j.at("q").get<std::uint64_t>();
            row.slot = j.at("slot").is_null() ? -1 : j.at("slot").get<std::int64_t>();
            row.sa = j.at("sa").get<int>();
            row.sb = j.at("sb").get<int>();
            if (row.sa < 0 || row.sa > 3 || row.sb < 0 || row.sb > 3)
                throw IncompleteTranscript("setting out of range at line " + std::to_string(lineno));
            row.oa = parse_outcome(j, "oa", lineno);
            row.ob = parse_outcome(j, "ob", lineno);
            rows.push_back(row);
        } catch (const nlohmann::json::exception& e) {
            throw IncompleteTranscript("missing field at line " + std::to_string(lineno) + ": " +
                                       e.what());
        }
    }
    return rows;
}

} // namespace qkdhorse
