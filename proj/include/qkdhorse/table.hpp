#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qkdhorse/rational.hpp"
#include "qkdhorse/types.hpp"

namespace qkdhorse {

// Slot-to-result translation table. A receiver consulting the table at
// setting k reads entry (slot + k * block) mod n_slots, i.e. each 22.5-degree
// setting step shifts the slot by one block (1000 for an 8000-slot table).
struct TranslationTable {
    std::int64_t n_slots = 0;
    Role role = Role::Alice;
    std::vector<Outcome> entries;

    std::int64_t block() const { return n_slots / 8; }

    bool operator==(const TranslationTable& o) const {
        return n_slots == o.n_slots && role == o.role && entries == o.entries;
    }
};

// Integer count constraints a table pair must satisfy:
//   singles           non-NoDetect entries per table
//   pairs             coincidence count at every realizable relative shift
//   diff_by_absdelta  disagreement counts by |setting-index difference|
struct TableTargets {
    std::int64_t n_slots = 0;
    std::int64_t singles = 0;
    std::int64_t pairs = 0;
    std::array<std::int64_t, 4> diff_by_absdelta{0, 0, 0, 0};
};

struct TablePair {
    TranslationTable alice;
    TranslationTable bob;
    TableTargets targets;
    std::uint64_t seed = 0;
};

struct Violation {
    std::string constraint;
    std::int64_t expected = 0;
    std::int64_t actual = 0;
};

struct VerificationReport {
    std::int64_t singles_a = 0;
    std::int64_t singles_b = 0;
    std::map<int, std::int64_t> pairs_by_shift; // signed shift -3..3
    std::map<int, std::int64_t> diff_by_shift;  // signed shift -3..3
    std::array<Rational, 4> e_by_absdelta;      // exact E per |setting diff|
    Rational chsh_s;                            // exact S from the four CHSH cells
    bool pass = false;
    std::vector<Violation> violations;
};

struct NotMultipleOf8000 : Error {
    explicit NotMultipleOf8000(std::int64_t n)
        : Error("n_slots must be a positive multiple of 8000, got " + std::to_string(n)) {}
};

struct SlotOutOfRange : Error {
    SlotOutOfRange(std::int64_t slot, std::int64_t n)
        : Error("slot " + std::to_string(slot) + " out of range [0," + std::to_string(n) + ")") {}
};

struct InfeasibleTargets : Error {
    explicit InfeasibleTargets(const std::string& why) : Error("infeasible targets: " + why) {}
};

struct SearchExhausted : Error {
    explicit SearchExhausted(std::int64_t iters)
        : Error("table search exhausted after " + std::to_string(iters) + " iterations") {}
};

struct MismatchedSizes : Error {
    MismatchedSizes(std::int64_t a, std::int64_t b)
        : Error("tables disagree on n_slots: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

struct TableFormatError : Error {
    int line;
    TableFormatError(int line_, const std::string& reason)
        : Error("table format error at line " + std::to_string(line_) + ": " + reason),
          line(line_) {}
};

struct RoleMissing : Error {
    RoleMissing() : Error("table header is missing a valid ROLE=A|B field") {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& why) : Error("table length mismatch: " + why) {}
};

// Count targets for a table of n_slots (positive multiple of 8000). For 8000
// returns the canonical values {6624, 5488, {0,804,2744,4684}}; larger tables
// get targets with a strictly smaller |E1 - 1/sqrt(2)| gap.
TableTargets derive_targets(std::int64_t n_slots);

// Throws InfeasibleTargets unless the count system admits a solution.
void validate_targets(const TableTargets& t);

Outcome lookup(const TranslationTable& table, std::int64_t slot, Setting setting);

// Builds a pair satisfying the full constraint system, deterministically for a
// fixed (targets, seed, max_iters). Targets that fit the structured
// decomposition are built directly; anything else falls back to a seeded
// local search and may throw SearchExhausted.
TablePair generate_tables(const TableTargets& targets, std::uint64_t seed,
                          std::int64_t max_iters = 2'000'000);

// Exhaustive sweep over all slots and all 16 setting pairs.
VerificationReport verify_tables(const TablePair& pair);

void save_table(const TranslationTable& table, const std::string& path);
TranslationTable load_table(const std::string& path);

} // namespace qkdhorse
