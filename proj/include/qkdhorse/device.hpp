#pragma once

#include <cstdint>
#include <variant>

#include "qkdhorse/channel.hpp"
#include "qkdhorse/table.hpp"
#include "qkdhorse/types.hpp"

namespace qkdhorse {

enum class DeviceMode { QkdMode, TrojanMode };

enum class PulseKind { Normal, TrojanActivate };

struct InitiationPulse {
    PulseKind kind = PulseKind::Normal;
    std::uint64_t session_id = 0;
};

// Receiver state. Devices ship in QkdMode; a TrojanActivate initiation pulse
// switches them to TrojanMode for the rest of the session (sticky).
struct ReceiverState {
    Role role = Role::Alice;
    DeviceMode mode = DeviceMode::QkdMode;
    const TranslationTable* table = nullptr;
    double mask_kappa = 1.0; // QKD-mode artificial detection keep-probability
    std::uint64_t seed = 0;
    std::uint64_t slot_origin = 0;
};

struct DetectionRecord {
    std::uint64_t seq = 0;
    Setting setting;
    Outcome outcome = Outcome::NoDetect;
};

struct ModeInputMismatch : Error {
    ModeInputMismatch() : Error("round input does not match device mode") {}
};

ReceiverState handle_initiation(ReceiverState state, const InitiationPulse& pulse);

// Uniform over the four settings, from the receiver's own seeded stream.
Setting choose_setting(const ReceiverState& state, std::uint64_t seq);

// Per-arm round input: a PulseEvent in TrojanMode, the receiver's half of a
// resolved honest round in QkdMode.
struct QkdHalf {
    std::uint64_t seq = 0;
    Outcome outcome = Outcome::NoDetect;
};
using RoundInput = std::variant<PulseEvent, QkdHalf>;

DetectionRecord measure(const ReceiverState& state, const ChannelConfig& config,
                        const RoundInput& input, Setting setting);

} // namespace qkdhorse
