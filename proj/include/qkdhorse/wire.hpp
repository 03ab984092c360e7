#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "qkdhorse/types.hpp"

namespace qkdhorse {

// Line-based wire protocol: every message is one LF-terminated line of UTF-8
// JSON with exactly the listed fields. Unknown fields are rejected.

struct SyncMsg {
    std::uint64_t session = 0;
    std::int64_t n_slots = 0;
    bool activate = false; // kind: "normal" | "activate"
};

struct PulseMsg {
    std::uint64_t q = 0;
    std::int64_t slot = 0;
    int pol = 0;
};

struct AnnounceMsg {
    std::uint64_t q = 0;
    bool det = false;
    int set = 0;
};

struct DoneMsg {
    std::uint64_t count = 0;
};

using WireMessage = std::variant<SyncMsg, PulseMsg, AnnounceMsg, DoneMsg>;

struct WireFormatError : Error {
    explicit WireFormatError(const std::string& why) : Error("wire format error: " + why) {}
};

struct ProtocolViolation : Error {
    explicit ProtocolViolation(const std::string& why) : Error("protocol violation: " + why) {}
};

// Encodes without the trailing newline.
std::string encode(const WireMessage& msg);
WireMessage decode_line(std::string_view line);

} // namespace qkdhorse
