#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qkdhorse/device.hpp"
#include "qkdhorse/rng.hpp"
#include "qkdhorse/table.hpp"

using namespace qkdhorse;

TEST_CASE("mode state machine: activation is sticky, normal pulses are inert") {
    ReceiverState dev;
    dev.mode = DeviceMode::QkdMode;

    dev = handle_initiation(dev, {PulseKind::Normal, 1});
    CHECK(dev.mode == DeviceMode::QkdMode);

    dev = handle_initiation(dev, {PulseKind::TrojanActivate, 1});
    CHECK(dev.mode == DeviceMode::TrojanMode);

    dev = handle_initiation(dev, {PulseKind::Normal, 1});
    CHECK(dev.mode == DeviceMode::TrojanMode); // no way back within a session
}

TEST_CASE("setting choice: uniform, deterministic, independent across roles") {
    ReceiverState alice{Role::Alice, DeviceMode::QkdMode, nullptr, 1.0, 17, 0};
    ReceiverState bob{Role::Bob, DeviceMode::QkdMode, nullptr, 1.0, 17, 0};

    CHECK(choose_setting(alice, 123).index == choose_setting(alice, 123).index);

    const std::uint64_t n = 1'000'000;
    std::int64_t counts[4] = {0, 0, 0, 0};
    double cross = 0.0;
    for (std::uint64_t q = 0; q < n; ++q) {
        const int a = choose_setting(alice, q).index;
        const int b = choose_setting(bob, q).index;
        ++counts[a];
        cross += (a - 1.5) * (b - 1.5);
    }
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    for (int i = 0; i < 4; ++i)
        CHECK(std::fabs(static_cast<double>(counts[i]) - n / 4.0) <= 5.0 * sigma);

    // Index correlation between the two streams: mean of the product of
    // centered indices, each with variance 1.25.
    const double rho = cross / static_cast<double>(n) / 1.25;
    CHECK(std::fabs(rho) <= 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("QKD-mode masking thins detections to the table rate") {
    ReceiverState dev{Role::Alice, DeviceMode::QkdMode, nullptr, 0.828, 29, 0};
    ChannelConfig cfg;
    const std::uint64_t n = 1'000'000;
    std::int64_t kept = 0;
    for (std::uint64_t q = 0; q < n; ++q) {
        const DetectionRecord rec = measure(dev, cfg, QkdHalf{q, Outcome::One}, kAlpha);
        if (detected(rec.outcome)) ++kept;
        else CHECK(rec.outcome == Outcome::NoDetect);
    }
    const double rate = static_cast<double>(kept) / static_cast<double>(n);
    const double sigma = std::sqrt(0.828 * 0.172 / static_cast<double>(n));
    CHECK(std::fabs(rate - 0.828) <= 3.0 * sigma);
}

TEST_CASE("masking deletes, never flips") {
    ReceiverState dev{Role::Alice, DeviceMode::QkdMode, nullptr, 0.6, 31, 0};
    ChannelConfig cfg;
    for (std::uint64_t q = 0; q < 50'000; ++q) {
        const Outcome in = q % 2 ? Outcome::One : Outcome::Zero;
        const Outcome out = measure(dev, cfg, QkdHalf{q, in}, kGamma).outcome;
        if (detected(out)) CHECK(out == in);
    }
}

TEST_CASE("identity masking passes outcomes through") {
    ReceiverState dev{Role::Alice, DeviceMode::QkdMode, nullptr, 1.0, 3, 0};
    ChannelConfig cfg;
    CHECK(measure(dev, cfg, QkdHalf{0, Outcome::One}, kAlpha).outcome == Outcome::One);
    CHECK(measure(dev, cfg, QkdHalf{1, Outcome::Zero}, kAlpha).outcome == Outcome::Zero);
    CHECK(measure(dev, cfg, QkdHalf{2, Outcome::NoDetect}, kAlpha).outcome ==
          Outcome::NoDetect);
}

TEST_CASE("trojan-mode rate stacks under upstream efficiency") {
    const TablePair tables = generate_tables(derive_targets(8000), 2);
    ReceiverState dev{Role::Alice, DeviceMode::TrojanMode, &tables.alice, 1.0, 41, 0};
    ChannelConfig cfg;
    cfg.backend = Backend::Trojan;
    cfg.n_slots = 8000;
    cfg.seed = 91;
    cfg.eta = 0.05;

    const std::uint64_t n = 1'000'000;
    std::int64_t det = 0;
    for (std::uint64_t q = 0; q < n; ++q) {
        const PulseEvent pulse = emit(cfg, q);
        const Setting s = choose_setting(dev, q);
        if (detected(measure(dev, cfg, pulse, s).outcome)) ++det;
    }
    // 5% physical efficiency through the 0.828 table: roughly 4%.
    const double rate = static_cast<double>(det) / static_cast<double>(n);
    const double expect = 0.05 * 0.828;
    const double sigma = std::sqrt(expect * (1.0 - expect) / static_cast<double>(n));
    CHECK(std::fabs(rate - expect) <= 3.0 * sigma);
}

TEST_CASE("trojan mode reads only the pulse, its own table and its own setting") {
    const TablePair tables = generate_tables(derive_targets(8000), 2);
    ReceiverState dev{Role::Alice, DeviceMode::TrojanMode, &tables.alice, 1.0, 43, 0};
    ChannelConfig cfg;
    cfg.backend = Backend::TrojanMasked;
    cfg.n_slots = 8000;
    cfg.noise_q = 0.2;
    SeqRng fuzz(7);
    for (std::uint64_t q = 0; q < 5'000; ++q) {
        const PulseEvent pulse{q, static_cast<std::int64_t>(fuzz.bounded(8000)),
                               static_cast<int>(fuzz.next() & 1)};
        const Setting s{static_cast<int>(fuzz.bounded(4))};
        const Outcome first = measure(dev, cfg, pulse, s).outcome;
        // Anything the other side does (different settings, permuted data)
        // cannot reach this arm; a replay must match exactly.
        CHECK(measure(dev, cfg, pulse, s).outcome == first);
    }
}

TEST_CASE("mode/input mismatches are rejected") {
    const TablePair tables = generate_tables(derive_targets(8000), 2);
    ChannelConfig cfg;
    cfg.backend = Backend::Trojan;
    cfg.n_slots = 8000;

    ReceiverState qkd{Role::Alice, DeviceMode::QkdMode, &tables.alice, 1.0, 1, 0};
    CHECK_THROWS_AS(measure(qkd, cfg, PulseEvent{0, 5, 0}, kAlpha), ModeInputMismatch);

    ReceiverState trojan{Role::Alice, DeviceMode::TrojanMode, &tables.alice, 1.0, 1, 0};
    CHECK_THROWS_AS(measure(trojan, cfg, QkdHalf{0, Outcome::One}, kAlpha), ModeInputMismatch);
}
