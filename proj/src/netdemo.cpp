#include "qkdhorse/netdemo.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qkdhorse/device.hpp"
#include "qkdhorse/eve.hpp"
#include "qkdhorse/protocol.hpp"
#include "qkdhorse/rng.hpp"
#include "qkdhorse/table.hpp"
#include "qkdhorse/wire.hpp"

namespace qkdhorse {

namespace {

struct Endpoint {
    std::string host;
    int port = 0;
};

Endpoint parse_endpoint(const std::string& spec) {
    const std::size_t colon = spec.rfind(':');
    if (colon == std::string::npos) throw Error("endpoint must be host:port, got " + spec);
    Endpoint ep;
    ep.host = spec.substr(0, colon);
    ep.port = std::stoi(spec.substr(colon + 1));
    return ep;
}

class TcpConn {
public:
    TcpConn() = default;
    explicit TcpConn(int fd) : fd_(fd) { tune(); }
    TcpConn(const TcpConn&) = delete;
    TcpConn& operator=(const TcpConn&) = delete;
    TcpConn(TcpConn&& o) noexcept { swap(o); }
    TcpConn& operator=(TcpConn&& o) noexcept {
        swap(o);
        return *this;
    }
    ~TcpConn() { close_fd(); }

    void swap(TcpConn& o) noexcept {
        std::swap(fd_, o.fd_);
        std::swap(buf_, o.buf_);
        std::swap(lines_read_, o.lines_read_);
    }

    static TcpConn connect_to(const Endpoint& ep) {
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
        if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
            throw Error("bad address: " + ep.host);
        // The peer may still be starting; retry for a few seconds.
        for (int attempt = 0;; ++attempt) {
            const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
            if (fd < 0) throw ConnectionLost("socket() failed");
            if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0)
                return TcpConn(fd);
            ::close(fd);
            if (attempt >= 100)
                throw ConnectionLost("cannot connect to " + ep.host + ":" +
                                     std::to_string(ep.port));
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    }

    bool read_line(std::string& out) {
        while (true) {
            const std::size_t nl = buf_.find('\n');
            if (nl != std::string::npos) {
                out = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                ++lines_read_;
                return true;
            }
            char chunk[65536];
            const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n < 0) throw ConnectionLost("recv failed: " + std::string(std::strerror(errno)));
            if (n == 0) {
                if (!buf_.empty()) throw ConnectionLost("stream ended mid-line");
                return false;
            }
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void write_line(const std::string& line) {
        std::string data = line;
        data.push_back('\n');
        std::size_t off = 0;
        while (off < data.size()) {
            const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n <= 0) throw ConnectionLost("send failed: " + std::string(std::strerror(errno)));
            off += static_cast<std::size_t>(n);
        }
    }

    int lines_read() const { return lines_read_; }
    bool open() const { return fd_ >= 0; }

private:
    void tune() {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        timeval tv{120, 0};
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    }
    void close_fd() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

    int fd_ = -1;
    std::string buf_;
    int lines_read_ = 0;
};

TcpConn accept_one(const Endpoint& ep, int* bound_port) {
    const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (lfd < 0) throw ConnectionLost("socket() failed");
    int one = 1;
    ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) {
        ::close(lfd);
        throw Error("bad address: " + ep.host);
    }
    if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(lfd);
        throw ConnectionLost("bind failed on " + ep.host + ":" + std::to_string(ep.port));
    }
    if (::listen(lfd, 1) != 0) {
        ::close(lfd);
        throw ConnectionLost("listen failed");
    }
    sockaddr_in actual{};
    socklen_t alen = sizeof(actual);
    ::getsockname(lfd, reinterpret_cast<sockaddr*>(&actual), &alen);
    if (bound_port) *bound_port = ntohs(actual.sin_port);
    std::printf("{\"listening\":%d}\n", ntohs(actual.sin_port));
    std::fflush(stdout);
    const int cfd = ::accept(lfd, nullptr, nullptr);
    ::close(lfd);
    if (cfd < 0) throw ConnectionLost("accept failed");
    return TcpConn(cfd);
}

// Inbound line source: live socket (optionally recorded verbatim) or a
// recorded file for replay.
class LineSource {
public:
    LineSource(TcpConn* conn, const std::string& record_path, const std::string& replay_path) {
        conn_ = conn;
        if (!replay_path.empty()) {
            replay_.open(replay_path, std::ios::binary);
            if (!replay_) throw Error("cannot open replay file " + replay_path);
        }
        if (!record_path.empty()) {
            record_.open(record_path, std::ios::binary);
            if (!record_) throw Error("cannot open record file " + record_path);
        }
    }

    bool next(std::string& out) {
        bool got;
        if (replay_.is_open()) {
            got = static_cast<bool>(std::getline(replay_, out));
        } else {
            got = conn_->read_line(out);
        }
        if (got) {
            ++lineno_;
            if (record_.is_open()) record_ << out << "\n";
        }
        return got;
    }

    int lineno() const { return lineno_; }
    bool live() const { return !replay_.is_open(); }

private:
    TcpConn* conn_ = nullptr;
    std::ifstream replay_;
    std::ofstream record_;
    int lineno_ = 0;
};

WireMessage decode_or_lose(const std::string& line, int lineno) {
    try {
        return decode_line(line);
    } catch (const WireFormatError& e) {
        throw ConnectionLost("malformed line " + std::to_string(lineno) + ": " + e.what());
    }
}

std::string json_dump_file(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << j.dump() << "\n";
    return path;
}

} // namespace

int serve_source(const SourceOptions& opts) {
    if (opts.rounds == 0) throw Error("source: rounds must be >= 1");
    ChannelConfig cfg;
    cfg.backend = opts.backend;
    cfg.n_slots = opts.n_slots;
    cfg.slot_policy = opts.slot_policy;
    cfg.seed = opts.seed;

    TcpConn alice = TcpConn::connect_to(parse_endpoint(opts.connect_alice));
    TcpConn bob = TcpConn::connect_to(parse_endpoint(opts.connect_bob));
    TcpConn eve;
    if (!opts.connect_eve.empty()) eve = TcpConn::connect_to(parse_endpoint(opts.connect_eve));

    const std::string sync =
        encode(SyncMsg{opts.session_id, opts.n_slots, opts.activate});
    alice.write_line(sync);
    bob.write_line(sync);
    if (eve.open()) eve.write_line(sync);

    auto read_announce = [](TcpConn& conn, const char* who, std::uint64_t q) {
        std::string line;
        if (!conn.read_line(line))
            throw ConnectionLost(std::string(who) + " closed before round " + std::to_string(q));
        const WireMessage msg = decode_or_lose(line, conn.lines_read());
        const AnnounceMsg* ann = std::get_if<AnnounceMsg>(&msg);
        if (!ann) throw ProtocolViolation(std::string("expected ann from ") + who);
        if (ann->q != q)
            throw ProtocolViolation("out-of-order announcement from " + std::string(who) +
                                    ": expected q=" + std::to_string(q) + ", got q=" +
                                    std::to_string(ann->q));
        return line;
    };

    for (std::uint64_t q = 0; q < opts.rounds; ++q) {
        const PulseEvent p = emit(cfg, q);
        const std::string pulse = encode(PulseMsg{q, p.slot, p.polbit});
        alice.write_line(pulse);
        bob.write_line(pulse);
        if (eve.open() && q >= opts.eve_from) eve.write_line(pulse);

        const std::string ann_a = read_announce(alice, "alice", q);
        const std::string ann_b = read_announce(bob, "bob", q);
        bob.write_line(ann_a);
        alice.write_line(ann_b);
        // Announcements are public broadcast; the tap always hears them even
        // when it joined after the first pulses. Alice's is forwarded first.
        if (eve.open()) {
            eve.write_line(ann_a);
            eve.write_line(ann_b);
        }
    }

    const std::string done = encode(DoneMsg{opts.rounds});
    alice.write_line(done);
    bob.write_line(done);
    if (eve.open()) eve.write_line(done);

    auto read_done = [](TcpConn& conn, const char* who) {
        std::string line;
        if (!conn.read_line(line))
            throw ConnectionLost(std::string(who) + " closed before done handshake");
        const WireMessage msg = decode_or_lose(line, conn.lines_read());
        const DoneMsg* d = std::get_if<DoneMsg>(&msg);
        if (!d) throw ProtocolViolation(std::string("expected done from ") + who);
        return d->count;
    };
    const std::uint64_t count_a = read_done(alice, "alice");
    const std::uint64_t count_b = read_done(bob, "bob");
    std::uint64_t count_e = 0;
    if (eve.open()) count_e = read_done(eve, "eve");

    nlohmann::json summary{{"rounds", opts.rounds},
                           {"done_alice", count_a},
                           {"done_bob", count_b},
                           {"done_eve", count_e},
                           {"activate", opts.activate}};
    std::printf("%s\n", summary.dump().c_str());
    std::fflush(stdout);
    if (!opts.summary_out.empty()) json_dump_file(summary, opts.summary_out);
    return 0;
}

int run_receiver(const ReceiverOptions& opts) {
    const TranslationTable table = load_table(opts.table_path);

    TcpConn conn;
    if (opts.replay_in.empty()) conn = accept_one(parse_endpoint(opts.listen), nullptr);
    LineSource in(&conn, opts.record_out, opts.replay_in);

    ReceiverState dev{opts.role, DeviceMode::QkdMode, &table, 1.0, opts.seed, 0};
    ChannelConfig cfg;
    cfg.backend = opts.masked ? Backend::TrojanMasked : Backend::Trojan;
    cfg.n_slots = table.n_slots;
    cfg.noise_q = opts.noise_q;

    struct PendingRow {
        RoundRow row;
        bool peer_known = false;
        bool own_detected = false;
        int own_setting = 0;
        bool peer_detected = false;
        int peer_setting = 0;
    };
    std::vector<PendingRow> rows;
    std::uint64_t next_seq = 0;
    bool synced = false;
    bool done = false;
    std::uint64_t announced_rounds = 0;

    std::string line;
    while (!done && in.next(line)) {
        const WireMessage msg = decode_or_lose(line, in.lineno());
        if (const SyncMsg* sync = std::get_if<SyncMsg>(&msg)) {
            if (sync->n_slots != table.n_slots)
                throw ProtocolViolation("sync n_slots " + std::to_string(sync->n_slots) +
                                        " does not match table " + std::to_string(table.n_slots));
            dev = handle_initiation(dev, {sync->activate ? PulseKind::TrojanActivate
                                                         : PulseKind::Normal,
                                          sync->session});
            synced = true;
        } else if (const PulseMsg* pulse = std::get_if<PulseMsg>(&msg)) {
            if (!synced) throw ProtocolViolation("pulse before sync");
            if (pulse->q != next_seq)
                throw ProtocolViolation("out-of-order pulse: expected q=" +
                                        std::to_string(next_seq) + ", got q=" +
                                        std::to_string(pulse->q));
            ++next_seq;

            const Setting setting = choose_setting(dev, pulse->q);
            Outcome outcome = Outcome::NoDetect;
            if (dev.mode == DeviceMode::TrojanMode) {
                const PulseEvent ev{pulse->q, pulse->slot, pulse->pol};
                outcome = measure(dev, cfg, ev, setting).outcome;
            }
            // In QkdMode this box has no quantum channel to measure, so the
            // pulse yields no detection.

            PendingRow pr;
            pr.row.q = pulse->q;
            pr.row.slot = pulse->slot;
            pr.own_detected = detected(outcome);
            pr.own_setting = setting.index;
            if (opts.role == Role::Alice) {
                pr.row.sa = setting.index;
                pr.row.oa = outcome;
                pr.row.ob = Outcome::NoDetect; // peer bit is never broadcast
            } else {
                pr.row.sb = setting.index;
                pr.row.ob = outcome;
                pr.row.oa = Outcome::NoDetect;
            }
            rows.push_back(pr);

            if (in.live()) conn.write_line(encode(AnnounceMsg{pulse->q, detected(outcome),
                                                              setting.index}));
            ++announced_rounds;
        } else if (const AnnounceMsg* ann = std::get_if<AnnounceMsg>(&msg)) {
            if (ann->q >= rows.size()) throw ProtocolViolation("announcement for unknown round");
            PendingRow& pr = rows[ann->q];
            if (pr.peer_known) throw ProtocolViolation("duplicate announcement");
            pr.peer_known = true;
            pr.peer_detected = ann->det;
            pr.peer_setting = ann->set;
            if (opts.role == Role::Alice)
                pr.row.sb = ann->set;
            else
                pr.row.sa = ann->set;
        } else if (std::get_if<DoneMsg>(&msg)) {
            done = true;
        }
    }
    if (!done && opts.replay_in.empty()) throw ConnectionLost("stream ended before done");

    for (const PendingRow& pr : rows)
        if (!pr.peer_known) throw ProtocolViolation("done before all announcements arrived");

    // Own sifted key from public data plus own outcomes.
    std::string key_bits;
    std::vector<std::uint64_t> key_seqs;
    std::uint64_t trojan_rounds = dev.mode == DeviceMode::TrojanMode ? announced_rounds : 0;
    for (const PendingRow& pr : rows) {
        if (!pr.own_detected || !pr.peer_detected || pr.own_setting != pr.peer_setting) continue;
        const Outcome own = opts.role == Role::Alice ? pr.row.oa : pr.row.ob;
        key_bits.push_back(static_cast<char>('0' + outcome_bit(own)));
        key_seqs.push_back(pr.row.q);
    }

    if (!opts.transcript_out.empty()) {
        std::vector<RoundRow> flat;
        flat.reserve(rows.size());
        for (const PendingRow& pr : rows) flat.push_back(pr.row);
        write_transcript(flat, opts.transcript_out);
    }
    if (!opts.status_out.empty()) {
        nlohmann::json status{
            {"role", opts.role == Role::Alice ? "alice" : "bob"},
            {"mode", dev.mode == DeviceMode::TrojanMode ? "trojan" : "qkd"},
            {"rounds", announced_rounds},
            {"trojan_rounds", trojan_rounds},
            {"key_bits", key_bits},
            {"key_seqs", key_seqs},
        };
        json_dump_file(status, opts.status_out);
    }
    if (in.live()) conn.write_line(encode(DoneMsg{announced_rounds}));
    return 0;
}

int run_eve(const EveOptions& opts) {
    if (opts.table_a_path.empty() || opts.table_b_path.empty()) throw MissingTables();
    TablePair tables;
    tables.alice = load_table(opts.table_a_path);
    tables.bob = load_table(opts.table_b_path);
    tables.targets = derive_targets(tables.alice.n_slots);

    TcpConn conn;
    if (opts.replay_in.empty()) conn = accept_one(parse_endpoint(opts.listen), nullptr);
    LineSource in(&conn, opts.record_out, opts.replay_in);

    struct TapRound {
        PublicRound pub;
        int anns_seen = 0;
    };
    std::map<std::uint64_t, TapRound> log;
    bool done = false;
    std::uint64_t done_count = 0;
    std::string line;
    while (!done && in.next(line)) {
        const WireMessage msg = decode_or_lose(line, in.lineno());
        if (const PulseMsg* pulse = std::get_if<PulseMsg>(&msg)) {
            TapRound& t = log[pulse->q];
            t.pub.q = pulse->q;
            t.pub.slot = pulse->slot;
            if (opts.masked) t.pub.pol_tap = pulse->pol;
        } else if (const AnnounceMsg* ann = std::get_if<AnnounceMsg>(&msg)) {
            TapRound& t = log[ann->q];
            t.pub.q = ann->q;
            // Hub forwards Alice's announcement first, then Bob's.
            if (t.anns_seen == 0) {
                t.pub.det_a = ann->det;
                t.pub.sa = ann->set;
            } else {
                t.pub.det_b = ann->det;
                t.pub.sb = ann->set;
            }
            ++t.anns_seen;
        } else if (const DoneMsg* d = std::get_if<DoneMsg>(&msg)) {
            done_count = d->count;
            done = true;
        }
    }

    EveKnowledge knowledge;
    knowledge.tables = &tables;
    knowledge.masked_backend = opts.masked;
    for (const auto& [q, t] : log) {
        (void)q;
        if (t.anns_seen == 2) knowledge.log.push_back(t.pub);
    }
    AttackReport rep = reconstruct_key(knowledge);

    nlohmann::json out{{"coverage", rep.coverage},
                       {"bits", rep.bits.size()},
                       {"accuracy", nullptr}};
    if (!opts.truth_status.empty()) {
        std::ifstream ts(opts.truth_status);
        if (!ts) throw Error("cannot open truth status " + opts.truth_status);
        nlohmann::json truth = nlohmann::json::parse(ts);
        const std::string bits = truth.at("key_bits").get<std::string>();
        const std::vector<std::uint64_t> seqs = truth.at("key_seqs");
        std::map<std::uint64_t, int> key;
        for (std::size_t i = 0; i < seqs.size() && i < bits.size(); ++i)
            key[seqs[i]] = bits[i] - '0';
        std::int64_t hit = 0, scored = 0;
        for (const auto& [seq, bit] : rep.bits) {
            auto it = key.find(seq);
            if (it == key.end()) continue;
            ++scored;
            if (it->second == bit) ++hit;
        }
        out["accuracy"] =
            scored > 0 ? static_cast<double>(hit) / static_cast<double>(scored) : 0.0;
    }
    std::printf("%s\n", out.dump().c_str());
    std::fflush(stdout);
    if (!opts.report_out.empty()) json_dump_file(out, opts.report_out);
    if (in.live()) conn.write_line(encode(DoneMsg{done_count ? done_count : log.size()}));
    return 0;
}

} // namespace qkdhorse
