// qkdhorse: entanglement-based QKD simulator with a table-driven trojan
// channel, statistical audits, and a networked demo. One subcommand per job;
// every randomized path takes an explicit --seed so runs are replayable.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qkdhorse/analysis.hpp"
#include "qkdhorse/channel.hpp"
#include "qkdhorse/eve.hpp"
#include "qkdhorse/netdemo.hpp"
#include "qkdhorse/protocol.hpp"
#include "qkdhorse/rng.hpp"
#include "qkdhorse/table.hpp"

using namespace qkdhorse;

namespace {

using nlohmann::json;

json verify_report_json(const VerificationReport& rep) {
    json pairs, diffs, viols = json::array();
    for (const auto& [shift, count] : rep.pairs_by_shift) pairs[std::to_string(shift)] = count;
    for (const auto& [shift, count] : rep.diff_by_shift) diffs[std::to_string(shift)] = count;
    for (const Violation& v : rep.violations)
        viols.push_back({{"constraint", v.constraint}, {"expected", v.expected},
                         {"actual", v.actual}});
    return json{{"pass", rep.pass},
                {"singles_a", rep.singles_a},
                {"singles_b", rep.singles_b},
                {"pairs_by_shift", pairs},
                {"diff_by_shift", diffs},
                {"e1", {{"num", rep.e_by_absdelta[1].num}, {"den", rep.e_by_absdelta[1].den}}},
                {"s", {{"num", rep.chsh_s.num}, {"den", rep.chsh_s.den}}},
                {"s_value", rep.chsh_s.value()},
                {"violations", viols}};
}

void print_verify_report(const VerificationReport& rep, std::int64_t n) {
    std::printf("n_slots            %" PRId64 "\n", n);
    std::printf("singles            A=%" PRId64 "  B=%" PRId64 "  (rate %.4f)\n", rep.singles_a,
                rep.singles_b, static_cast<double>(rep.singles_a) / static_cast<double>(n));
    std::printf("pairs by shift    ");
    for (const auto& [shift, count] : rep.pairs_by_shift)
        std::printf(" %+d:%" PRId64, shift, count);
    std::printf("\n");
    std::printf("diffs by shift    ");
    for (const auto& [shift, count] : rep.diff_by_shift)
        std::printf(" %+d:%" PRId64, shift, count);
    std::printf("\n");
    std::printf("E1                 %s = %.6f\n", rep.e_by_absdelta[1].str().c_str(),
                rep.e_by_absdelta[1].value());
    std::printf("S                  %s = %.5f\n", rep.chsh_s.str().c_str(), rep.chsh_s.value());
    if (!rep.pass) {
        std::printf("FAILED %zu constraint(s):\n", rep.violations.size());
        for (const Violation& v : rep.violations)
            std::printf("  %s expected %" PRId64 " actual %" PRId64 "\n", v.constraint.c_str(),
                        v.expected, v.actual);
    } else {
        std::printf("all constraints satisfied\n");
    }
}

json summary_json(const SessionTranscript& t, const SessionConfig& cfg) {
    const auto& c = t.chsh_report;
    return json{{"rounds", cfg.rounds},
                {"singles_rate_a",
                 static_cast<double>(t.detections_a) / static_cast<double>(cfg.rounds)},
                {"singles_rate_b",
                 static_cast<double>(t.detections_b) / static_cast<double>(cfg.rounds)},
                {"pair_rate",
                 static_cast<double>(t.both_detected) / static_cast<double>(cfg.rounds)},
                {"key_bits", t.key_a.size()},
                {"sift_yield", static_cast<double>(t.key_a.size()) / static_cast<double>(cfg.rounds)},
                {"qber", t.qber_value},
                {"s_value", c.s_value},
                {"s_std_err", c.s_std_err},
                {"violated", c.violated},
                {"seed_source", cfg.channel.seed},
                {"seed_alice", cfg.seed_alice},
                {"seed_bob", cfg.seed_bob}};
}

Backend parse_backend(const std::string& name) {
    if (name == "honest") return Backend::Honest;
    if (name == "trojan") return Backend::Trojan;
    if (name == "trojan-masked") return Backend::TrojanMasked;
    throw CLI::ValidationError("--backend", "must be honest|trojan|trojan-masked");
}

TablePair load_pair(const std::string& path_a, const std::string& path_b) {
    TablePair pair;
    pair.alice = load_table(path_a);
    pair.bob = load_table(path_b);
    if (pair.alice.role != Role::Alice || pair.bob.role != Role::Bob)
        throw Error("table roles do not match: --table-a must be ROLE=A, --table-b ROLE=B");
    pair.targets = derive_targets(pair.alice.n_slots);
    return pair;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ekert-protocol QKD simulator and time-slot trojan analysis toolkit"};
    app.require_subcommand(1);

    // ---- gen-tables ----
    auto* gen = app.add_subcommand("gen-tables", "generate a translation table pair");
    std::int64_t gen_n = 8000;
    std::uint64_t gen_seed = 0;
    std::int64_t gen_iters = 2'000'000;
    std::string gen_out_a, gen_out_b;
    bool gen_json = false;
    gen->add_option("--n", gen_n, "table size (multiple of 8000)");
    gen->add_option("--seed", gen_seed, "generator seed")->required();
    gen->add_option("--max-iters", gen_iters, "search iteration cap");
    gen->add_option("--out-a", gen_out_a, "output path, Alice table")->required();
    gen->add_option("--out-b", gen_out_b, "output path, Bob table")->required();
    gen->add_flag("--json", gen_json, "machine-readable report");

    // ---- verify-tables ----
    auto* verify = app.add_subcommand("verify-tables", "exhaustively check a table pair");
    std::string ver_a, ver_b;
    bool ver_json = false;
    verify->add_option("--a", ver_a, "Alice table path")->required();
    verify->add_option("--b", ver_b, "Bob table path")->required();
    verify->add_flag("--json", ver_json, "machine-readable report");

    // ---- simulate ----
    auto* sim = app.add_subcommand("simulate", "run a key-distribution session");
    std::string sim_backend = "trojan";
    std::uint64_t sim_rounds = 0, sim_seed = 0;
    std::int64_t sim_n = 8000;
    std::string sim_policy = "uniform";
    double sim_eta = 1.0, sim_noise = 0.0, sim_kappa = 1.0;
    std::string sim_ta, sim_tb, sim_out, sim_taps_out;
    std::optional<std::uint64_t> sim_gen_seed, sim_activate;
    bool sim_sweep = false, sim_json = false;
    sim->add_option("--backend", sim_backend, "honest|trojan|trojan-masked");
    sim->add_option("--rounds", sim_rounds, "number of rounds")->required();
    sim->add_option("--seed", sim_seed, "master seed")->required();
    sim->add_option("--n", sim_n, "slot count");
    sim->add_option("--slot-policy", sim_policy, "uniform|cyclic");
    sim->add_option("--eta", sim_eta, "per-arm detection efficiency");
    sim->add_option("--noise-q", sim_noise, "per-arm flip probability");
    sim->add_option("--mask-kappa", sim_kappa, "QKD-mode detection keep-probability");
    sim->add_option("--table-a", sim_ta, "Alice table file");
    sim->add_option("--table-b", sim_tb, "Bob table file");
    sim->add_option("--gen-seed", sim_gen_seed, "generate tables with this seed instead");
    sim->add_option("--activate-at", sim_activate, "deliver trojan activation before this round");
    sim->add_flag("--sweep", sim_sweep, "deterministic slot x setting-pair sweep");
    sim->add_option("--out", sim_out, "transcript output (NDJSON)");
    sim->add_option("--taps-out", sim_taps_out, "polarization tap recording (NDJSON)");
    sim->add_flag("--json", sim_json, "machine-readable summary");

    // ---- attack ----
    auto* atk = app.add_subcommand("attack", "reconstruct the key from public data");
    std::string atk_tr, atk_ta, atk_tb, atk_taps;
    std::optional<std::uint64_t> atk_gen_seed;
    bool atk_masked = false, atk_json = false;
    atk->add_option("--transcript", atk_tr, "transcript file")->required();
    atk->add_option("--table-a", atk_ta, "Alice table file");
    atk->add_option("--table-b", atk_tb, "Bob table file");
    atk->add_option("--gen-seed", atk_gen_seed, "generate tables with this seed instead");
    atk->add_option("--taps", atk_taps, "polarization tap file");
    atk->add_flag("--masked", atk_masked, "transcript came from the masked backend");
    atk->add_flag("--json", atk_json, "machine-readable report");

    // ---- detect ----
    auto* det = app.add_subcommand("detect", "statistical trojan audit of a transcript");
    std::string det_tr;
    std::int64_t det_n = 0;
    int det_bins = 16;
    std::optional<double> det_alpha;
    bool det_json = false;
    det->add_option("--transcript", det_tr, "transcript file")->required();
    det->add_option("--n", det_n, "slot count (0 = infer)");
    det->add_option("--bins", det_bins, "slot bins for the chi-square tests");
    det->add_option("--alpha", det_alpha, "flag threshold; exit 1 when a test flags");
    det->add_flag("--json", det_json, "machine-readable report");

    // ---- report ----
    auto* rpt = app.add_subcommand("report", "session statistics from transcripts");
    std::string rpt_a, rpt_b;
    bool rpt_json = false;
    rpt->add_option("--a", rpt_a, "transcript (or Alice-side transcript)")->required();
    rpt->add_option("--b", rpt_b, "Bob-side transcript to merge");
    rpt->add_flag("--json", rpt_json, "machine-readable report");

    // ---- serve ----
    auto* srv = app.add_subcommand("serve", "run one role of the networked demo");
    std::string srv_role;
    std::string srv_listen, srv_ca, srv_cb, srv_ce;
    std::string srv_table, srv_ta, srv_tb;
    std::uint64_t srv_seed = 0, srv_rounds = 0, srv_session = 1, srv_eve_from = 0;
    std::int64_t srv_n = 8000;
    std::string srv_policy = "uniform", srv_backend = "trojan", srv_kind = "activate";
    double srv_noise = 0.0;
    std::string srv_transcript, srv_status, srv_record, srv_replay, srv_report, srv_truth,
        srv_summary;
    srv->add_option("--role", srv_role, "source|alice|bob|eve")->required();
    srv->add_option("--listen", srv_listen, "host:port to accept the source on");
    srv->add_option("--connect-a", srv_ca, "source: Alice endpoint");
    srv->add_option("--connect-b", srv_cb, "source: Bob endpoint");
    srv->add_option("--connect-eve", srv_ce, "source: eavesdropper tap endpoint");
    srv->add_option("--table", srv_table, "receiver translation table");
    srv->add_option("--table-a", srv_ta, "eve: Alice table");
    srv->add_option("--table-b", srv_tb, "eve: Bob table");
    srv->add_option("--seed", srv_seed, "role seed");
    srv->add_option("--rounds", srv_rounds, "source: rounds to emit");
    srv->add_option("--n", srv_n, "source: slot count");
    srv->add_option("--slot-policy", srv_policy, "uniform|cyclic");
    srv->add_option("--backend", srv_backend, "trojan|trojan-masked");
    srv->add_option("--kind", srv_kind, "sync kind: activate|normal");
    srv->add_option("--session", srv_session, "session id");
    srv->add_option("--eve-from", srv_eve_from, "first round forwarded to the tap");
    srv->add_option("--noise-q", srv_noise, "receiver per-arm flip probability");
    srv->add_option("--transcript-out", srv_transcript, "receiver transcript path");
    srv->add_option("--status-out", srv_status, "receiver status/key path");
    srv->add_option("--record", srv_record, "record inbound lines verbatim");
    srv->add_option("--replay", srv_replay, "replay a recorded inbound stream");
    srv->add_option("--report-out", srv_report, "eve attack report path");
    srv->add_option("--truth", srv_truth, "eve: receiver status file for scoring");
    srv->add_option("--summary-out", srv_summary, "source summary path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) {
            const TableTargets targets = derive_targets(gen_n);
            const TablePair pair = generate_tables(targets, gen_seed, gen_iters);
            save_table(pair.alice, gen_out_a);
            save_table(pair.bob, gen_out_b);
            const VerificationReport rep = verify_tables(pair);
            if (gen_json)
                std::printf("%s\n", verify_report_json(rep).dump().c_str());
            else
                print_verify_report(rep, gen_n);
            return rep.pass ? 0 : 1;
        }

        if (verify->parsed()) {
            TablePair pair;
            pair.alice = load_table(ver_a);
            pair.bob = load_table(ver_b);
            if (pair.alice.role != Role::Alice || pair.bob.role != Role::Bob)
                throw Error("--a must hold a ROLE=A table and --b a ROLE=B table");
            pair.targets = derive_targets(pair.alice.n_slots);
            const VerificationReport rep = verify_tables(pair);
            if (ver_json)
                std::printf("%s\n", verify_report_json(rep).dump().c_str());
            else
                print_verify_report(rep, pair.alice.n_slots);
            return rep.pass ? 0 : 1;
        }

        if (sim->parsed()) {
            SessionConfig cfg;
            cfg.channel.backend = parse_backend(sim_backend);
            cfg.channel.n_slots = sim_n;
            cfg.channel.slot_policy =
                sim_policy == "cyclic" ? SlotPolicy::Cyclic : SlotPolicy::UniformRandom;
            cfg.channel.eta = sim_eta;
            cfg.channel.noise_q = sim_noise;
            cfg.channel.seed = derive_seed(sim_seed, 0x51);
            cfg.seed_alice = derive_seed(sim_seed, 0x52);
            cfg.seed_bob = derive_seed(sim_seed, 0x53);
            cfg.rounds = sim_rounds;
            cfg.mask_kappa = sim_kappa;
            cfg.activation_round = sim_activate;
            cfg.sweep_settings = sim_sweep;

            TablePair pair;
            if (!sim_ta.empty() || !sim_tb.empty()) {
                pair = load_pair(sim_ta, sim_tb);
            } else if (cfg.channel.backend != Backend::Honest || sim_activate) {
                pair = generate_tables(derive_targets(sim_n),
                                       sim_gen_seed.value_or(sim_seed));
            }
            if (pair.alice.n_slots > 0) cfg.tables = &pair;

            const SessionTranscript t = run_session(cfg);
            if (!sim_out.empty()) write_transcript(t.rounds, sim_out);
            if (!sim_taps_out.empty()) {
                std::FILE* f = std::fopen(sim_taps_out.c_str(), "wb");
                if (!f) throw Error("cannot open " + sim_taps_out);
                for (std::uint64_t q = 0; q < cfg.rounds; ++q) {
                    const PulseEvent p = emit(cfg.channel, q);
                    std::fprintf(f, "{\"q\":%llu,\"pol\":%d}\n",
                                 static_cast<unsigned long long>(q),
                                 tap_polarization(cfg.channel, p));
                }
                std::fclose(f);
            }
            const json summary = summary_json(t, cfg);
            if (sim_json)
                std::printf("%s\n", summary.dump().c_str());
            else
                std::printf("rounds %llu  singles %.4f/%.4f  pairs %.4f  key %zu  qber %.5f  "
                            "S %.5f +- %.5f%s\n",
                            static_cast<unsigned long long>(cfg.rounds),
                            summary["singles_rate_a"].get<double>(),
                            summary["singles_rate_b"].get<double>(),
                            summary["pair_rate"].get<double>(), t.key_a.size(), t.qber_value,
                            t.chsh_report.s_value, t.chsh_report.s_std_err,
                            t.chsh_report.violated ? "  (CHSH violated)" : "");
            return 0;
        }

        if (atk->parsed()) {
            const std::vector<RoundRow> rows = read_transcript(atk_tr);
            TablePair pair;
            if (!atk_ta.empty() || !atk_tb.empty())
                pair = load_pair(atk_ta, atk_tb);
            else if (atk_gen_seed)
                pair = generate_tables(derive_targets(8000), *atk_gen_seed);
            else
                throw Error("attack needs --table-a/--table-b or --gen-seed");

            EveKnowledge knowledge;
            knowledge.tables = &pair;
            knowledge.masked_backend = atk_masked;
            knowledge.log = public_view(rows);
            if (!atk_taps.empty()) {
                std::ifstream taps(atk_taps);
                if (!taps) throw Error("cannot open " + atk_taps);
                std::vector<std::pair<std::uint64_t, int>> tap_list;
                std::string line;
                while (std::getline(taps, line)) {
                    if (line.empty()) continue;
                    const json j = json::parse(line);
                    tap_list.emplace_back(j.at("q").get<std::uint64_t>(), j.at("pol").get<int>());
                }
                attach_taps(knowledge.log, tap_list);
            }
            AttackReport rep = reconstruct_key(knowledge);
            score_attack(rep, rows);
            const json out{{"accuracy", rep.accuracy_vs_alice},
                           {"coverage", rep.coverage},
                           {"bits", rep.bits.size()}};
            std::printf("%s\n", out.dump().c_str());
            (void)atk_json;
            return 0;
        }

        if (det->parsed()) {
            const std::vector<RoundRow> rows = read_transcript(det_tr);
            const AuditReport rep = audit(rows, det_n, det_bins);
            const json out{{"slot_bit",
                            {{"statistic", rep.slot_bit.statistic},
                             {"dof", rep.slot_bit.dof},
                             {"p_value", rep.slot_bit.p_value}}},
                           {"slot_detect",
                            {{"statistic", rep.slot_detect.statistic},
                             {"dof", rep.slot_detect.dof},
                             {"p_value", rep.slot_detect.p_value}}},
                           {"singles_rate_a", rep.singles_rate_a},
                           {"singles_rate_b", rep.singles_rate_b},
                           {"pair_rate", rep.pair_rate},
                           {"sift_yield", rep.sift_yield},
                           {"qber", rep.qber},
                           {"s_value", rep.s_value},
                           {"s_limit_at_eta", rep.s_limit_at_eta},
                           {"loophole_free", rep.loophole_free}};
            if (det_json)
                std::printf("%s\n", out.dump().c_str());
            else
                std::printf("slot-bit p=%.3g  slot-detect p=%.3g  S=%.5f  limit(eta)=%.5f  "
                            "loophole_free=%s\n",
                            rep.slot_bit.p_value, rep.slot_detect.p_value, rep.s_value,
                            rep.s_limit_at_eta, rep.loophole_free ? "true" : "false");
            const bool flagged =
                det_alpha && (rep.slot_bit.p_value < *det_alpha ||
                              rep.slot_detect.p_value < *det_alpha);
            return flagged ? 1 : 0;
        }

        if (rpt->parsed()) {
            std::vector<RoundRow> rows = read_transcript(rpt_a);
            if (!rpt_b.empty()) {
                // Merge: each side's transcript is authoritative for its own
                // outcome column.
                const std::vector<RoundRow> rows_b = read_transcript(rpt_b);
                if (rows.size() != rows_b.size())
                    throw IncompleteTranscript("transcripts differ in round count");
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (rows[i].q != rows_b[i].q || rows[i].slot != rows_b[i].slot ||
                        rows[i].sa != rows_b[i].sa || rows[i].sb != rows_b[i].sb)
                        throw IncompleteTranscript("transcripts disagree at round " +
                                                   std::to_string(rows[i].q));
                    rows[i].ob = rows_b[i].ob;
                }
            }
            const SessionTranscript t = analyze_rounds(std::move(rows));
            const std::uint64_t n = t.rounds.size();
            const json out{
                {"rounds", n},
                {"singles_rate_a", static_cast<double>(t.detections_a) / n},
                {"singles_rate_b", static_cast<double>(t.detections_b) / n},
                {"pair_rate", static_cast<double>(t.both_detected) / n},
                {"key_bits", t.key_a.size()},
                {"qber", t.qber_value},
                {"s_value", t.chsh_report.s_value},
                {"s_std_err", t.chsh_report.s_std_err},
                {"violated", t.chsh_report.violated}};
            if (rpt_json)
                std::printf("%s\n", out.dump().c_str());
            else
                std::printf("rounds %llu  pairs %.4f  key %zu  qber %.5f  S %.5f +- %.5f%s\n",
                            static_cast<unsigned long long>(n),
                            out["pair_rate"].get<double>(), t.key_a.size(), t.qber_value,
                            t.chsh_report.s_value, t.chsh_report.s_std_err,
                            t.chsh_report.violated ? "  (CHSH violated)" : "");
            return 0;
        }

        if (srv->parsed()) {
            if (srv_role == "source") {
                if (srv_ca.empty() || srv_cb.empty() || srv_rounds == 0 ||
                    !srv->count("--seed")) {
                    std::fprintf(stderr,
                                 "source needs --connect-a, --connect-b, --rounds, --seed\n");
                    return 2;
                }
                SourceOptions o;
                o.connect_alice = srv_ca;
                o.connect_bob = srv_cb;
                o.connect_eve = srv_ce;
                o.backend = srv_backend == "trojan-masked" ? Backend::TrojanMasked
                                                           : Backend::Trojan;
                o.n_slots = srv_n;
                o.slot_policy =
                    srv_policy == "cyclic" ? SlotPolicy::Cyclic : SlotPolicy::UniformRandom;
                o.seed = srv_seed;
                o.rounds = srv_rounds;
                o.session_id = srv_session;
                o.activate = srv_kind != "normal";
                o.eve_from = srv_eve_from;
                o.summary_out = srv_summary;
                return serve_source(o);
            }
            if (srv_role == "alice" || srv_role == "bob") {
                if (srv_table.empty() || (srv_listen.empty() && srv_replay.empty()) ||
                    !srv->count("--seed")) {
                    std::fprintf(stderr, "receiver needs --table, --seed and --listen/--replay\n");
                    return 2;
                }
                ReceiverOptions o;
                o.role = srv_role == "alice" ? Role::Alice : Role::Bob;
                o.listen = srv_listen;
                o.table_path = srv_table;
                o.seed = srv_seed;
                o.noise_q = srv_noise;
                o.masked = srv_backend == "trojan-masked";
                o.transcript_out = srv_transcript;
                o.status_out = srv_status;
                o.record_out = srv_record;
                o.replay_in = srv_replay;
                return run_receiver(o);
            }
            if (srv_role == "eve") {
                if ((srv_ta.empty() || srv_tb.empty())) {
                    std::fprintf(stderr, "eve needs --table-a and --table-b\n");
                    return 2;
                }
                if (srv_listen.empty() && srv_replay.empty()) {
                    std::fprintf(stderr, "eve needs --listen or --replay\n");
                    return 2;
                }
                EveOptions o;
                o.listen = srv_listen;
                o.table_a_path = srv_ta;
                o.table_b_path = srv_tb;
                o.masked = srv_backend == "trojan-masked";
                o.report_out = srv_report;
                o.truth_status = srv_truth;
                o.record_out = srv_record;
                o.replay_in = srv_replay;
                return run_eve(o);
            }
            std::fprintf(stderr, "unknown role %s\n", srv_role.c_str());
            return 2;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
