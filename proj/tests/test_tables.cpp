#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "qkdhorse/rng.hpp"
#include "qkdhorse/table.hpp"

using namespace qkdhorse;

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out);
    out << data;
}

double e1_error(const TableTargets& t) {
    const double e1 = static_cast<double>(t.pairs - 2 * t.diff_by_absdelta[1]) /
                      static_cast<double>(t.pairs);
    return std::fabs(e1 - kInvSqrt2);
}

} // namespace

TEST_CASE("derive_targets returns the canonical 8000-slot counts") {
    const TableTargets t = derive_targets(8000);
    CHECK(t.singles == 6624);
    CHECK(t.pairs == 5488);
    CHECK(t.diff_by_absdelta[0] == 0);
    CHECK(t.diff_by_absdelta[1] == 804);
    CHECK(t.diff_by_absdelta[2] == 2744);
    CHECK(t.diff_by_absdelta[3] == 4684);
    // Detection rates 0.828 and 0.686.
    CHECK(static_cast<double>(t.singles) / 8000.0 == doctest::Approx(0.828));
    CHECK(static_cast<double>(t.pairs) / 8000.0 == doctest::Approx(0.686));
    // E1 = 485/686 sits about 1.1e-4 below 1/sqrt(2).
    const double err = e1_error(t);
    CHECK(err > 1.0e-4);
    CHECK(err < 1.2e-4);
}

TEST_CASE("derive_targets at 16000 shrinks the E1 gap") {
    const TableTargets t = derive_targets(16000);
    CHECK(t.n_slots == 16000);
    CHECK(t.singles == 13213);
    CHECK(t.pairs == 10946);
    CHECK(t.diff_by_absdelta[1] == 1603);
    CHECK(t.diff_by_absdelta[2] == t.pairs / 2);
    CHECK(t.diff_by_absdelta[3] == t.pairs - t.diff_by_absdelta[1]);
    const double err16 = e1_error(t);
    CHECK(err16 <= 5.0e-5);
    CHECK(err16 < e1_error(derive_targets(8000)));
    validate_targets(t);
}

TEST_CASE("derive_targets rejects sizes that are not multiples of 8000") {
    CHECK_THROWS_AS(derive_targets(8001), NotMultipleOf8000);
    CHECK_THROWS_AS(derive_targets(0), NotMultipleOf8000);
    CHECK_THROWS_AS(derive_targets(-8000), NotMultipleOf8000);
    CHECK_THROWS_AS(derive_targets(4000), NotMultipleOf8000);
}

TEST_CASE("validate_targets enforces the count system invariants") {
    TableTargets t = derive_targets(8000);
    SUBCASE("inclusion-exclusion infeasibility") {
        t.singles = 7000;
        t.pairs = 5000;
        t.diff_by_absdelta = {0, 700, 2500, 4300};
        CHECK_THROWS_AS(validate_targets(t), InfeasibleTargets);
        CHECK_THROWS_AS(generate_tables(t, 1), InfeasibleTargets);
    }
    SUBCASE("d2 must be half of pairs") {
        t.diff_by_absdelta[2] = 2745;
        CHECK_THROWS_AS(validate_targets(t), InfeasibleTargets);
    }
    SUBCASE("d3 must complement d1") {
        t.diff_by_absdelta[3] = 4685;
        CHECK_THROWS_AS(validate_targets(t), InfeasibleTargets);
    }
    SUBCASE("d0 must be zero") {
        t.diff_by_absdelta[0] = 2;
        CHECK_THROWS_AS(validate_targets(t), InfeasibleTargets);
    }
}

TEST_CASE("lookup applies the block shift with wrap-around") {
    TranslationTable t;
    t.n_slots = 8000;
    t.role = Role::Alice;
    t.entries.assign(8000, Outcome::Zero);
    t.entries[3223] = Outcome::One;
    t.entries[2500] = Outcome::NoDetect;

    CHECK(lookup(t, 2223, kBeta) == Outcome::One);    // 2223 + 1000 = 3223
    CHECK(lookup(t, 2223, kAlpha) == Outcome::Zero);  // zero shift
    CHECK(lookup(t, 7500, kDelta) == Outcome::NoDetect); // (7500 + 3000) mod 8000 = 2500
    CHECK_THROWS_AS(lookup(t, 8000, kAlpha), SlotOutOfRange);
    CHECK_THROWS_AS(lookup(t, -1, kAlpha), SlotOutOfRange);
}

TEST_CASE("shift coherence: lookup(T,s,k) equals lookup at the pre-shifted slot") {
    const TablePair pair = generate_tables(derive_targets(8000), 3);
    SeqRng rng(99);
    for (int i = 0; i < 2000; ++i) {
        const std::int64_t s = static_cast<std::int64_t>(rng.bounded(8000));
        const Setting k{static_cast<int>(rng.bounded(4))};
        const std::int64_t shifted = (s + k.index * pair.alice.block()) % 8000;
        CHECK(lookup(pair.alice, s, k) == lookup(pair.alice, shifted, kAlpha));
        CHECK(lookup(pair.bob, s, k) == lookup(pair.bob, shifted, kAlpha));
    }
}

TEST_CASE("generated pair satisfies every count constraint exactly") {
    const TableTargets targets = derive_targets(8000);
    const TablePair pair = generate_tables(targets, 1);
    const VerificationReport rep = verify_tables(pair);

    REQUIRE(rep.pass);
    CHECK(rep.violations.empty());
    CHECK(rep.singles_a == 6624);
    CHECK(rep.singles_b == 6624);
    for (int d = -3; d <= 3; ++d) CHECK(rep.pairs_by_shift.at(d) == 5488);
    CHECK(rep.diff_by_shift.at(0) == 0);
    for (int d : {-1, 1}) CHECK(rep.diff_by_shift.at(d) == 804);
    for (int d : {-2, 2}) CHECK(rep.diff_by_shift.at(d) == 2744);
    for (int d : {-3, 3}) CHECK(rep.diff_by_shift.at(d) == 4684);

    CHECK(rep.e_by_absdelta[0] == Rational(1, 1));
    CHECK(rep.e_by_absdelta[1] == Rational(485, 686));
    CHECK(rep.e_by_absdelta[2] == Rational(0, 1));
    CHECK(rep.e_by_absdelta[3] == Rational(-485, 686));
    CHECK(rep.chsh_s == Rational(970, 343));

    // S sits just below the quantum value: 2*sqrt(2) - S <= 6.3e-4, S > 2.
    const double s = rep.chsh_s.value();
    CHECK(s > 2.0);
    CHECK(2.0 * std::sqrt(2.0) - s > 0.0);
    CHECK(2.0 * std::sqrt(2.0) - s <= 6.3e-4);

    // Near independence of the two sides' detections.
    const double singles_rate = 6624.0 / 8000.0;
    CHECK(std::fabs(5488.0 / 8000.0 - singles_rate * singles_rate) <= 0.001);
}

TEST_CASE("generation is deterministic per seed") {
    const TableTargets targets = derive_targets(8000);
    const TablePair p1 = generate_tables(targets, 1);
    const TablePair p2 = generate_tables(targets, 1);
    CHECK(p1.alice == p2.alice);
    CHECK(p1.bob == p2.bob);

    const TablePair p3 = generate_tables(targets, 2);
    CHECK(verify_tables(p3).pass);
}

TEST_CASE("generation works at 16000 slots") {
    const TableTargets targets = derive_targets(16000);
    const TablePair pair = generate_tables(targets, 5);
    const VerificationReport rep = verify_tables(pair);
    CHECK(rep.pass);
    CHECK(rep.singles_a == targets.singles);
    for (int d = -3; d <= 3; ++d) CHECK(rep.pairs_by_shift.at(d) == targets.pairs);
}

TEST_CASE("a single flipped entry is caught by the exhaustive sweep") {
    TablePair pair = generate_tables(derive_targets(8000), 1);
    for (auto& e : pair.alice.entries) {
        if (e == Outcome::Zero) {
            e = Outcome::One;
            break;
        }
    }
    const VerificationReport rep = verify_tables(pair);
    CHECK_FALSE(rep.pass);
    REQUIRE_FALSE(rep.violations.empty());
    bool c3_or_c4 = false;
    for (const Violation& v : rep.violations)
        if (v.constraint.rfind("C3", 0) == 0 || v.constraint.rfind("C4", 0) == 0) c3_or_c4 = true;
    CHECK(c3_or_c4);
}

TEST_CASE("all-NoDetect tables fail verification with zero counts") {
    TablePair pair;
    pair.targets = derive_targets(8000);
    pair.alice.n_slots = pair.bob.n_slots = 8000;
    pair.alice.role = Role::Alice;
    pair.bob.role = Role::Bob;
    pair.alice.entries.assign(8000, Outcome::NoDetect);
    pair.bob.entries.assign(8000, Outcome::NoDetect);

    const VerificationReport rep = verify_tables(pair);
    CHECK_FALSE(rep.pass);
    CHECK(rep.singles_a == 0);
    CHECK(rep.singles_b == 0);
    for (int d = -3; d <= 3; ++d) CHECK(rep.pairs_by_shift.at(d) == 0);
}

TEST_CASE("verify rejects mismatched table sizes") {
    TablePair pair;
    pair.targets = derive_targets(8000);
    pair.alice = generate_tables(derive_targets(8000), 1).alice;
    pair.bob = generate_tables(derive_targets(16000), 1).bob;
    CHECK_THROWS_AS(verify_tables(pair), MismatchedSizes);
}

TEST_CASE("non-family targets go through the local search") {
    TableTargets t = derive_targets(8000);
    t.diff_by_absdelta[1] = 805;
    t.diff_by_absdelta[3] = t.pairs - 805;
    validate_targets(t);

    SUBCASE("search finds a satisfying assignment") {
        const TablePair pair = generate_tables(t, 1, 2'000'000);
        const VerificationReport rep = verify_tables(pair);
        CHECK(rep.pass);
        CHECK(rep.diff_by_shift.at(1) == 805);
    }
    SUBCASE("an exhausted search is an explicit outcome") {
        CHECK_THROWS_AS(generate_tables(t, 1, 1), SearchExhausted);
    }
}

TEST_CASE("table files round-trip exactly") {
    const TablePair pair = generate_tables(derive_targets(8000), 7);
    const std::string path = "roundtrip.tbl";
    save_table(pair.alice, path);
    const TranslationTable loaded = load_table(path);
    CHECK(loaded == pair.alice);

    // Re-saving the loaded table reproduces the file byte for byte.
    const std::string again = path + ".2";
    save_table(loaded, again);
    CHECK(slurp(path) == slurp(again));

    save_table(pair.bob, path);
    CHECK(load_table(path).role == Role::Bob);
    std::remove(path.c_str());
    std::remove(again.c_str());
}

TEST_CASE("loader reports malformed files precisely") {
    const TablePair pair = generate_tables(derive_targets(8000), 7);
    const std::string path = "malformed.tbl";
    save_table(pair.alice, path);
    const std::string good = slurp(path);

    SUBCASE("short data line is a length mismatch") {
        std::string bad = good;
        bad.erase(bad.find('\n') + 10, 1); // drop one character from line 2
        spit(path, bad);
        CHECK_THROWS_AS(load_table(path), LengthMismatch);
    }
    SUBCASE("missing data line is a length mismatch") {
        std::string bad = good;
        const std::size_t first = bad.find('\n') + 1;
        bad.erase(first, 1001); // drop line 2 entirely
        spit(path, bad);
        CHECK_THROWS_AS(load_table(path), LengthMismatch);
    }
    SUBCASE("alien character gets a 1-based line number") {
        std::string bad = good;
        const std::size_t line3 = bad.find('\n', bad.find('\n') + 1) + 1;
        bad[line3 + 5] = 'x';
        spit(path, bad);
        try {
            load_table(path);
            FAIL("expected TableFormatError");
        } catch (const TableFormatError& e) {
            CHECK(e.line == 3);
        }
    }
    SUBCASE("bad role field") {
        std::string bad = good;
        bad.replace(bad.find("ROLE=A"), 6, "ROLE=X");
        spit(path, bad);
        CHECK_THROWS_AS(load_table(path), RoleMissing);
    }
    SUBCASE("missing END line") {
        std::string bad = good;
        bad.erase(bad.rfind("END"));
        spit(path, bad);
        CHECK_THROWS_AS(load_table(path), TableFormatError);
    }
    std::remove(path.c_str());
}
