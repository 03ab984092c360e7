#pragma once

#include <stdexcept>
#include <string>

namespace qkdhorse {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class Role { Alice, Bob };

inline char role_char(Role r) { return r == Role::Alice ? 'A' : 'B'; }

// Measurement outcome. NoDetect never contributes a key bit.
enum class Outcome : char { Zero, One, NoDetect };

inline char outcome_char(Outcome o) {
    switch (o) {
    case Outcome::Zero: return '0';
    case Outcome::One: return '1';
    default: return '.';
    }
}

inline bool detected(Outcome o) { return o != Outcome::NoDetect; }

inline int outcome_bit(Outcome o) { return o == Outcome::One ? 1 : 0; }

inline Outcome bit_outcome(int b) { return b ? Outcome::One : Outcome::Zero; }

// Analyzer setting. Four values, 22.5 degrees apart.
struct Setting {
    int index = 0; // 0..3

    double angle_deg() const { return 22.5 * index; }

    static Setting from_index(int i) {
        if (i < 0 || i > 3) throw Error("setting index out of range: " + std::to_string(i));
        return Setting{i};
    }

    bool operator==(const Setting& o) const { return index == o.index; }
};

inline constexpr Setting kAlpha{0};
inline constexpr Setting kBeta{1};
inline constexpr Setting kGamma{2};
inline constexpr Setting kDelta{3};

} // namespace qkdhorse
