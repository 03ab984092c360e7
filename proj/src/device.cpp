#include "qkdhorse/device.hpp"

#include "qkdhorse/rng.hpp"

namespace qkdhorse {

ReceiverState handle_initiation(ReceiverState state, const InitiationPulse& pulse) {
    if (pulse.kind == PulseKind::TrojanActivate) state.mode = DeviceMode::TrojanMode;
    state.slot_origin = 0; // initiation pulse resynchronizes the slot clock
    return state;
}

Setting choose_setting(const ReceiverState& state, std::uint64_t seq) {
    Stream s(state.seed,
             state.role == Role::Alice ? StreamTag::SettingAlice : StreamTag::SettingBob);
    return Setting{static_cast<int>(s.bounded(seq, 4))};
}

DetectionRecord measure(const ReceiverState& state, const ChannelConfig& config,
                        const RoundInput& input, Setting setting) {
    DetectionRecord rec;
    rec.setting = setting;

    if (state.mode == DeviceMode::TrojanMode) {
        const PulseEvent* pulse = std::get_if<PulseEvent>(&input);
        if (!pulse) throw ModeInputMismatch();
        rec.seq = pulse->seq;
        rec.outcome =
            trojan_arm_outcome(config, *state.table, *pulse, setting, state.role, state.seed);
        return rec;
    }

    const QkdHalf* half = std::get_if<QkdHalf>(&input);
    if (!half) throw ModeInputMismatch();
    rec.seq = half->seq;
    rec.outcome = half->outcome;
    // Efficiency masking only deletes detections, it never flips a bit.
    if (detected(rec.outcome) && state.mask_kappa < 1.0) {
        Stream mask(state.seed,
                    state.role == Role::Alice ? StreamTag::MaskAlice : StreamTag::MaskBob);
        if (!mask.bernoulli(half->seq, state.mask_kappa)) rec.outcome = Outcome::NoDetect;
    }
    return rec;
}

} // namespace qkdhorse
