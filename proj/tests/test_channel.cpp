#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "qkdhorse/channel.hpp"
#include "qkdhorse/rng.hpp"
#include "qkdhorse/table.hpp"

using namespace qkdhorse;

namespace {

ChannelConfig make_config(Backend backend, std::uint64_t seed) {
    ChannelConfig cfg;
    cfg.backend = backend;
    cfg.n_slots = 8000;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("emit: cyclic policy wraps the round counter") {
    ChannelConfig cfg = make_config(Backend::Trojan, 1);
    cfg.slot_policy = SlotPolicy::Cyclic;
    CHECK(emit(cfg, 0).slot == 0);
    CHECK(emit(cfg, 8001).slot == 1);
    CHECK(emit(cfg, 15999).slot == 7999);
}

TEST_CASE("emit: deterministic and uniform") {
    ChannelConfig cfg = make_config(Backend::Trojan, 42);
    CHECK(emit(cfg, 5).slot == emit(cfg, 5).slot);

    // 1e6 draws: every slot count within 5 sigma of 125.
    std::vector<int> counts(8000, 0);
    for (std::uint64_t q = 0; q < 1'000'000; ++q) ++counts[emit(cfg, q).slot];
    const double mean = 125.0;
    const double sigma = std::sqrt(1e6 * (1.0 / 8000.0) * (1.0 - 1.0 / 8000.0));
    int worst = 0;
    for (int c : counts) worst = std::max(worst, static_cast<int>(std::fabs(c - mean)));
    CHECK(static_cast<double>(worst) <= 5.0 * sigma);
}

TEST_CASE("emit: polarization bit only on the masked backend") {
    ChannelConfig masked = make_config(Backend::TrojanMasked, 7);
    int ones = 0;
    for (std::uint64_t q = 0; q < 10'000; ++q) ones += emit(masked, q).polbit;
    CHECK(ones > 4600);
    CHECK(ones < 5400);

    ChannelConfig base = make_config(Backend::Trojan, 7);
    for (std::uint64_t q = 0; q < 100; ++q) CHECK(emit(base, q).polbit == 0);
}

TEST_CASE("honest resolution: equal settings always agree") {
    ChannelConfig cfg = make_config(Backend::Honest, 3);
    for (std::uint64_t q = 0; q < 20'000; ++q) {
        const ResolvedRound r = resolve_honest(cfg, q, kBeta, kBeta);
        CHECK(r.alice == r.bob);
        CHECK(detected(r.alice));
    }
}

TEST_CASE("honest resolution reproduces the quantum correlations") {
    ChannelConfig cfg = make_config(Backend::Honest, 12);
    const std::uint64_t n = 1'000'000;

    auto measure_e = [&](Setting a, Setting b) {
        std::int64_t same = 0, diff = 0;
        for (std::uint64_t q = 0; q < n; ++q) {
            const ResolvedRound r = resolve_honest(cfg, q, a, b);
            if (r.alice == r.bob)
                ++same;
            else
                ++diff;
        }
        return static_cast<double>(same - diff) / static_cast<double>(n);
    };

    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const double sigma = std::sqrt((1.0 - 0.5) / static_cast<double>(n));
    CHECK(std::fabs(measure_e(kAlpha, kBeta) - inv_sqrt2) <= 3.0 * sigma);   // 22.5 deg
    CHECK(std::fabs(measure_e(kAlpha, kDelta) + inv_sqrt2) <= 3.0 * sigma);  // 67.5 deg
    CHECK(std::fabs(measure_e(kAlpha, kGamma)) <= 3.0 * sigma);              // 45 deg
}

TEST_CASE("honest resolution: eta controls detection") {
    ChannelConfig cfg = make_config(Backend::Honest, 4);
    cfg.eta = 0.0;
    for (std::uint64_t q = 0; q < 1'000; ++q) {
        const ResolvedRound r = resolve_honest(cfg, q, kAlpha, kBeta);
        CHECK(r.alice == Outcome::NoDetect);
        CHECK(r.bob == Outcome::NoDetect);
    }
    cfg.eta = 0.5;
    std::int64_t det = 0;
    for (std::uint64_t q = 0; q < 100'000; ++q)
        if (detected(resolve_honest(cfg, q, kAlpha, kBeta).alice)) ++det;
    CHECK(std::fabs(det / 100'000.0 - 0.5) < 0.01);

    CHECK_THROWS_AS(resolve_honest(make_config(Backend::Trojan, 1), 0, kAlpha, kBeta),
                    WrongBackend);
}

TEST_CASE("table channel: cyclic sweep reproduces the exact pair counts") {
    const TablePair tables = generate_tables(derive_targets(8000), 1);
    ChannelConfig cfg = make_config(Backend::Trojan, 5);
    cfg.slot_policy = SlotPolicy::Cyclic;

    // All 8000 slots at settings (alpha, beta): 5488 double detections, 804
    // of them disagreeing.
    std::int64_t both = 0, diff = 0;
    for (std::uint64_t q = 0; q < 8000; ++q) {
        const ResolvedRound r = resolve_trojan(cfg, tables, emit(cfg, q), kAlpha, kBeta, 21, 22);
        if (detected(r.alice) && detected(r.bob)) {
            ++both;
            if (r.alice != r.bob) ++diff;
        }
    }
    CHECK(both == 5488);
    CHECK(diff == 804);
}

TEST_CASE("table channel: equal settings never disagree") {
    const TablePair tables = generate_tables(derive_targets(8000), 1);
    ChannelConfig cfg = make_config(Backend::Trojan, 5);
    cfg.slot_policy = SlotPolicy::Cyclic;
    for (int k = 0; k < 4; ++k) {
        const Setting s{k};
        for (std::uint64_t q = 0; q < 8000; ++q) {
            const ResolvedRound r = resolve_trojan(cfg, tables, emit(cfg, q), s, s, 31, 32);
            if (detected(r.alice) && detected(r.bob)) CHECK(r.alice == r.bob);
        }
    }
}

TEST_CASE("masked variant: polarization bit inverts bits, leaves gaps alone") {
    const TablePair tables = generate_tables(derive_targets(8000), 1);
    ChannelConfig cfg = make_config(Backend::TrojanMasked, 5);
    for (std::int64_t slot = 0; slot < 8000; slot += 13) {
        PulseEvent p0{0, slot, 0};
        PulseEvent p1{0, slot, 1};
        const Outcome o0 = trojan_arm_outcome(cfg, tables.alice, p0, kBeta, Role::Alice, 77);
        const Outcome o1 = trojan_arm_outcome(cfg, tables.alice, p1, kBeta, Role::Alice, 77);
        if (detected(o0)) {
            CHECK(detected(o1));
            CHECK(o0 != o1);
        } else {
            CHECK(o1 == Outcome::NoDetect);
        }
    }
}

TEST_CASE("table channel locality: the other side's setting never matters") {
    const TablePair tables = generate_tables(derive_targets(8000), 1);
    ChannelConfig cfg = make_config(Backend::Trojan, 9);
    cfg.noise_q = 0.1;
    for (std::uint64_t q = 0; q < 4000; ++q) {
        const PulseEvent pulse = emit(cfg, q);
        const Setting sa{static_cast<int>(q % 4)};
        const Outcome base = trojan_arm_outcome(cfg, tables.alice, pulse, sa, Role::Alice, 55);
        for (int sb = 0; sb < 4; ++sb) {
            const ResolvedRound r =
                resolve_trojan(cfg, tables, pulse, sa, Setting{sb}, 55, 56);
            CHECK(r.alice == base);
        }
    }
}

TEST_CASE("noise scaling: QBER 2q(1-q) and E shrink by (1-2q)^2") {
    const TablePair tables = generate_tables(derive_targets(8000), 1);
    const double q = 0.025;
    ChannelConfig cfg = make_config(Backend::Trojan, 14);
    cfg.noise_q = q;

    std::int64_t key = 0, errors = 0, same = 0, diff = 0;
    const std::uint64_t rounds = 1'000'000;
    for (std::uint64_t i = 0; i < rounds; ++i) {
        const PulseEvent pulse = emit(cfg, i);
        // Alternate equal-settings rounds (QBER) and (alpha, beta) rounds (E).
        if (i % 2 == 0) {
            const ResolvedRound r = resolve_trojan(cfg, tables, pulse, kGamma, kGamma, 61, 62);
            if (detected(r.alice) && detected(r.bob)) {
                ++key;
                if (r.alice != r.bob) ++errors;
            }
        } else {
            const ResolvedRound r = resolve_trojan(cfg, tables, pulse, kAlpha, kBeta, 61, 62);
            if (detected(r.alice) && detected(r.bob)) {
                if (r.alice == r.bob)
                    ++same;
                else
                    ++diff;
            }
        }
    }
    const double qber = static_cast<double>(errors) / static_cast<double>(key);
    const double expect_qber = 2.0 * q * (1.0 - q);
    CHECK(std::fabs(qber - expect_qber) <=
          3.0 * std::sqrt(expect_qber * (1.0 - expect_qber) / static_cast<double>(key)));

    const double e = static_cast<double>(same - diff) / static_cast<double>(same + diff);
    const double expect_e = (1.0 - 2.0 * q) * (1.0 - 2.0 * q) * (485.0 / 686.0);
    const double sigma = std::sqrt((1.0 - expect_e * expect_e) / static_cast<double>(same + diff));
    CHECK(std::fabs(e - expect_e) <= 3.0 * sigma);
}

TEST_CASE("table channel replays are bit-identical") {
    const TablePair tables = generate_tables(derive_targets(8000), 1);
    ChannelConfig cfg = make_config(Backend::TrojanMasked, 23);
    cfg.noise_q = 0.05;
    for (std::uint64_t i = 0; i < 2'000; ++i) {
        const PulseEvent pulse = emit(cfg, i);
        const ResolvedRound r1 = resolve_trojan(cfg, tables, pulse, kBeta, kGamma, 5, 6);
        const ResolvedRound r2 = resolve_trojan(cfg, tables, pulse, kBeta, kGamma, 5, 6);
        CHECK(r1.alice == r2.alice);
        CHECK(r1.bob == r2.bob);
    }
}

TEST_CASE("table channel rejects bad inputs") {
    const TablePair tables = generate_tables(derive_targets(8000), 1);
    ChannelConfig honest = make_config(Backend::Honest, 1);
    CHECK_THROWS_AS(trojan_arm_outcome(honest, tables.alice, PulseEvent{0, 5, 0}, kAlpha,
                                       Role::Alice, 1),
                    WrongBackend);
    ChannelConfig cfg = make_config(Backend::Trojan, 1);
    CHECK_THROWS_AS(trojan_arm_outcome(cfg, tables.alice, PulseEvent{0, 8000, 0}, kAlpha,
                                       Role::Alice, 1),
                    SlotOutOfRange);
    CHECK_THROWS_AS(trojan_arm_outcome(cfg, tables.alice, PulseEvent{0, -1, 0}, kAlpha,
                                       Role::Alice, 1),
                    SlotOutOfRange);
}
