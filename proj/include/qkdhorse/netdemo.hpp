#pragma once

#include <cstdint>
#include <string>

#include "qkdhorse/channel.hpp"
#include "qkdhorse/types.hpp"

namespace qkdhorse {

struct ConnectionLost : Error {
    explicit ConnectionLost(const std::string& why) : Error("connection lost: " + why) {}
};

// Source process: connects out to both receivers (and optionally to an
// eavesdropper tap), sends Sync, then pulses in lockstep with the
// announcement relay, then Done. The source doubles as the classical
// broadcast hub: each receiver's announcement is forwarded to the other
// receiver, and both are forwarded to the tap (Alice's first).
struct SourceOptions {
    std::string connect_alice;
    std::string connect_bob;
    std::string connect_eve; // empty: no tap
    Backend backend = Backend::Trojan;
    std::int64_t n_slots = 8000;
    SlotPolicy slot_policy = SlotPolicy::UniformRandom;
    std::uint64_t seed = 0;
    std::uint64_t rounds = 0;
    std::uint64_t session_id = 1;
    bool activate = true; // sync kind; the cheap-KD init pulse is the activation
    std::uint64_t eve_from = 0; // first round forwarded to the tap
    std::string summary_out;    // optional JSON summary file
};

int serve_source(const SourceOptions& opts);

// Receiver process: accepts the source connection (or replays a recorded
// stream), processes pulses through the device state machine, announces
// (detected, setting), and writes its transcript, key and status files.
struct ReceiverOptions {
    Role role = Role::Alice;
    std::string listen; // host:port, port 0 = ephemeral (prints {"listening":port})
    std::string table_path;
    std::uint64_t seed = 0;
    double noise_q = 0.0;
    bool masked = false; // apply the per-pulse polarization mask
    std::string transcript_out;
    std::string status_out;
    std::string record_out; // verbatim copy of every inbound line
    std::string replay_in;  // read lines from file instead of a socket
};

int run_receiver(const ReceiverOptions& opts);

// Eavesdropper process: passive tap on pulses and announcements,
// reconstructs the key from table knowledge plus public data.
struct EveOptions {
    std::string listen;
    std::string table_a_path;
    std::string table_b_path;
    bool masked = false;
    std::string report_out;
    std::string truth_status; // optional: receiver status file for scoring
    std::string record_out;
    std::string replay_in;
};

int run_eve(const EveOptions& opts);

} // namespace qkdhorse
