#include "qkdhorse/table.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "qkdhorse/rng.hpp"

namespace qkdhorse {

namespace {

// The constraint system factors over residue classes mod block: a shift by
// k*block moves a slot to the same residue column, one band position over.
// Within a column the 8 positions q carry the value band(q) = (q < 4), and a
// column is described by two 8-bit gap masks (u for Alice, v for Bob).
//
// Column patterns used by the direct construction (per-sign shift stats):
//   F  u=v=11111111   overlap 8 at every shift, eats (2,4,6) band crossings
//   XA u=10011001 v=0 overlap 0,               eats (2,2,2)
//   XB mirrored on v  overlap 0,               eats (2,2,2)
//   WA u=00001001 v=0 overlap 0,               eats (1,1,1)
//   WB mirrored on v  overlap 0,               eats (1,1,1)
//   GE u={0} v={4}    overlap only at shift 4, eats (1,1,1)
// Targets whose counts decompose over these patterns are built outright;
// everything else goes to the local search.
constexpr std::uint8_t kMaskF = 0xff;
constexpr std::uint8_t kMaskX = 0x99; // {0,3,4,7}
constexpr std::uint8_t kMaskW = 0x09; // {0,3}
constexpr std::uint8_t kMaskGu = 0x01;
constexpr std::uint8_t kMaskGv = 0x10;

inline bool band(int q) { return q < 4; }

struct ColumnPattern {
    std::uint8_t u = 0;
    std::uint8_t v = 0;
};

struct FamilyPlan {
    std::int64_t f = 0;  // full-gap columns
    std::int64_t xa = 0; // 4-cell Alice-side columns
    std::int64_t xb = 0;
    std::int64_t wa = 0; // 2-cell remainder columns
    std::int64_t wb = 0;
    std::int64_t ge = 0; // 1-cell-per-side remainder column
};

bool family_plan(const TableTargets& t, FamilyPlan& plan) {
    const std::int64_t n = t.n_slots;
    const std::int64_t b = n / 8;
    const std::int64_t s = t.singles;
    const std::int64_t p = t.pairs;
    if ((2 * s - p) % 8 != 0) return false;
    const std::int64_t m = (2 * s - p) / 8;
    if (t.diff_by_absdelta[1] != p / 2 - 2 * m) return false;
    const std::int64_t f = b - m;
    const std::int64_t ca = s - p;
    if (f < 0 || ca < 0) return false;
    plan.f = f;
    plan.xa = plan.xb = ca / 4;
    plan.wa = plan.wb = plan.ge = 0;
    switch (ca % 4) {
    case 1: plan.ge = 1; break;
    case 2: plan.wa = plan.wb = 1; break;
    case 3: plan.wa = plan.wb = plan.ge = 1; break;
    default: break;
    }
    const std::int64_t columns = plan.f + plan.xa + plan.xb + plan.wa + plan.wb + plan.ge;
    return columns <= b;
}

TranslationTable materialize(const std::vector<ColumnPattern>& cols, std::int64_t n, Role role,
                             std::int64_t rotation, bool flip) {
    const std::int64_t b = static_cast<std::int64_t>(cols.size());
    TranslationTable t;
    t.n_slots = n;
    t.role = role;
    t.entries.assign(n, Outcome::NoDetect);
    for (std::int64_t r = 0; r < b; ++r) {
        const std::uint8_t gaps = role == Role::Alice ? cols[r].u : cols[r].v;
        for (int q = 0; q < 8; ++q) {
            if ((gaps >> q) & 1) continue;
            bool one = band(q);
            if (flip) one = !one;
            const std::int64_t slot = (q * b + r + rotation) % n;
            t.entries[slot] = one ? Outcome::One : Outcome::Zero;
        }
    }
    return t;
}

TablePair build_pair(const std::vector<ColumnPattern>& cols, const TableTargets& targets,
                     std::uint64_t seed, SeqRng& rng) {
    const std::int64_t rotation = static_cast<std::int64_t>(rng.bounded(targets.n_slots));
    const bool flip = rng.next() & 1;
    TablePair pair;
    pair.alice = materialize(cols, targets.n_slots, Role::Alice, rotation, flip);
    pair.bob = materialize(cols, targets.n_slots, Role::Bob, rotation, flip);
    pair.targets = targets;
    pair.seed = seed;
    return pair;
}

std::vector<ColumnPattern> layout_family(const FamilyPlan& plan, std::int64_t b, SeqRng& rng) {
    // Gap columns are laid out in contiguous runs (the table reads as bands of
    // dead slots) starting at a seeded offset, run order seeded too.
    std::vector<std::pair<ColumnPattern, std::int64_t>> runs;
    runs.push_back({{kMaskF, kMaskF}, plan.f});
    runs.push_back({{kMaskX, 0}, plan.xa});
    runs.push_back({{0, kMaskX}, plan.xb});
    for (std::size_t i = runs.size(); i > 1; --i)
        std::swap(runs[i - 1], runs[rng.bounded(i)]);
    if (plan.wa) runs.push_back({{kMaskW, 0}, 1});
    if (plan.wb) runs.push_back({{0, kMaskW}, 1});
    if (plan.ge) runs.push_back({{kMaskGu, kMaskGv}, 1});

    std::vector<ColumnPattern> cols(b);
    std::int64_t at = static_cast<std::int64_t>(rng.bounded(b));
    for (const auto& [pattern, count] : runs)
        for (std::int64_t i = 0; i < count; ++i, at = (at + 1) % b)
            cols[at] = pattern;
    return cols;
}

// ---- seeded local search (non-family targets) ----

struct ColStats {
    std::int64_t cells_a = 0;
    std::int64_t cells_b = 0;
    std::array<std::int64_t, 7> overlap{};  // shift -3..3
    std::array<std::int64_t, 7> eaten{};    // band crossings covered, shift -3..3
};

ColStats column_stats(std::uint8_t u, std::uint8_t v) {
    ColStats st;
    st.cells_a = std::popcount(u);
    st.cells_b = std::popcount(v);
    for (int d = -3; d <= 3; ++d) {
        std::int64_t ov = 0, eat = 0;
        for (int q = 0; q < 8; ++q) {
            const int q2 = (q + d + 8) & 7;
            const bool a = (u >> q) & 1;
            const bool bb = (v >> q2) & 1;
            if (a && bb) ++ov;
            if (band(q) != band(q2) && (a || bb)) ++eat;
        }
        st.overlap[d + 3] = ov;
        st.eaten[d + 3] = eat;
    }
    return st;
}

struct SearchState {
    std::int64_t b = 0;
    std::vector<std::uint8_t> u, v;
    ColStats sums;

    void add(std::uint8_t cu, std::uint8_t cv, int sign) {
        const ColStats st = column_stats(cu, cv);
        sums.cells_a += sign * st.cells_a;
        sums.cells_b += sign * st.cells_b;
        for (int i = 0; i < 7; ++i) {
            sums.overlap[i] += sign * st.overlap[i];
            sums.eaten[i] += sign * st.eaten[i];
        }
    }

    std::int64_t cost(const TableTargets& t) const {
        const std::int64_t n = t.n_slots;
        const std::int64_t gaps = n - t.singles;
        const std::int64_t ov_target = t.pairs - n + 2 * gaps;
        std::int64_t c = std::llabs(sums.cells_a - gaps) + std::llabs(sums.cells_b - gaps);
        for (int d = -3; d <= 3; ++d) {
            c += std::llabs(sums.overlap[d + 3] - ov_target);
            if (d != 0) {
                const std::int64_t eat_target = 2 * std::llabs(d) * b - t.diff_by_absdelta[std::llabs(d)];
                c += std::llabs(sums.eaten[d + 3] - eat_target);
            }
        }
        return c;
    }
};

std::vector<ColumnPattern> local_search(const TableTargets& t, std::int64_t max_iters,
                                        SeqRng& rng) {
    const std::int64_t n = t.n_slots;
    const std::int64_t b = n / 8;
    const std::int64_t gaps = n - t.singles;
    const std::int64_t ov_target = t.pairs - n + 2 * gaps;

    SearchState st;
    st.b = b;
    st.u.assign(b, 0);
    st.v.assign(b, 0);

    // Start from the nearest structured skeleton and let the search close the
    // residual count gaps.
    std::int64_t f0 = std::min({ov_target / 8, gaps / 8, b});
    std::int64_t fill = std::min((gaps - 8 * f0) / 4, (b - f0) / 2);
    std::int64_t at = 0;
    for (std::int64_t i = 0; i < f0; ++i, ++at) st.u[at] = st.v[at] = kMaskF;
    for (std::int64_t i = 0; i < fill; ++i, ++at) st.u[at] = kMaskX;
    for (std::int64_t i = 0; i < fill; ++i, ++at) st.v[at] = kMaskX;
    for (std::int64_t r = 0; r < b; ++r) st.add(st.u[r], st.v[r], +1);

    std::int64_t cost = st.cost(t);
    std::int64_t stall = 0;
    for (std::int64_t iter = 0; iter < max_iters && cost > 0; ++iter) {
        const std::int64_t r = static_cast<std::int64_t>(rng.bounded(b));
        const bool side_a = rng.next() & 1;
        const int q = static_cast<int>(rng.bounded(8));
        std::uint8_t& mask = side_a ? st.u[r] : st.v[r];

        st.add(st.u[r], st.v[r], -1);
        mask ^= (1u << q);
        st.add(st.u[r], st.v[r], +1);
        const std::int64_t next = st.cost(t);

        const bool kick = stall > 4000 && (rng.next() & 0x3f) == 0;
        if (next < cost || (next == cost && (rng.next() & 1)) || kick) {
            if (next < cost) stall = 0; else ++stall;
            cost = next;
        } else {
            st.add(st.u[r], st.v[r], -1);
            mask ^= (1u << q);
            st.add(st.u[r], st.v[r], +1);
            ++stall;
        }
    }
    if (cost != 0) throw SearchExhausted(max_iters);

    std::vector<ColumnPattern> cols(b);
    for (std::int64_t r = 0; r < b; ++r) cols[r] = {st.u[r], st.v[r]};
    return cols;
}

} // namespace

TableTargets derive_targets(std::int64_t n_slots) {
    if (n_slots <= 0 || n_slots % 8000 != 0) throw NotMultipleOf8000(n_slots);

    TableTargets t;
    t.n_slots = n_slots;
    if (n_slots == 8000) {
        t.singles = 6624;
        t.pairs = 5488;
        t.diff_by_absdelta = {0, 804, 2744, 4684};
        return t;
    }

    // Larger tables: pick integer counts of the same constructible family,
    // minimizing the gap between E1 = (pairs - 2*d1)/pairs and 1/sqrt(2).
    // Parametrization: even pairs p, m = (2*singles - p)/8, E1 = 4m/p.
    const std::int64_t b = n_slots / 8;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const std::int64_t p0 = llround(0.686 * static_cast<double>(n_slots));
    double best_err = 1e9;
    std::int64_t best_p = 0, best_m = 0;
    for (std::int64_t p = p0 - 64; p <= p0 + 64; ++p) {
        if (p % 2 != 0 || p <= 0) continue;
        const std::int64_t m = llround(static_cast<double>(p) / (4.0 * std::sqrt(2.0)));
        const std::int64_t s = 4 * m + p / 2;
        const std::int64_t d1 = p / 2 - 2 * m;
        if (d1 < 0 || m > b || s > n_slots || p > s || p < 2 * s - n_slots) continue;
        const double err = std::fabs(4.0 * static_cast<double>(m) / static_cast<double>(p) - inv_sqrt2);
        if (err < best_err ||
            (err == best_err && std::llabs(p - p0) < std::llabs(best_p - p0))) {
            best_err = err;
            best_p = p;
            best_m = m;
        }
    }
    if (best_p == 0) throw InfeasibleTargets("no feasible counts near 0.686*n");
    t.pairs = best_p;
    t.singles = 4 * best_m + best_p / 2;
    const std::int64_t d1 = best_p / 2 - 2 * best_m;
    t.diff_by_absdelta = {0, d1, best_p / 2, best_p - d1};
    validate_targets(t);
    return t;
}

void validate_targets(const TableTargets& t) {
    if (t.n_slots <= 0 || t.n_slots % 8000 != 0) throw NotMultipleOf8000(t.n_slots);
    const std::int64_t b = t.n_slots / 8;
    if (t.singles < 0 || t.singles > t.n_slots) throw InfeasibleTargets("singles out of range");
    if (t.pairs % 2 != 0) throw InfeasibleTargets("pairs must be even (d2 = pairs/2)");
    if (t.pairs < 2 * t.singles - t.n_slots)
        throw InfeasibleTargets("pairs < 2*singles - n_slots (inclusion-exclusion)");
    if (t.pairs > t.singles) throw InfeasibleTargets("pairs exceeds singles");
    if (t.diff_by_absdelta[0] != 0) throw InfeasibleTargets("d0 must be 0");
    if (t.diff_by_absdelta[2] != t.pairs / 2) throw InfeasibleTargets("d2 must equal pairs/2");
    if (t.diff_by_absdelta[3] != t.pairs - t.diff_by_absdelta[1])
        throw InfeasibleTargets("d3 must equal pairs - d1");
    for (int m = 1; m <= 3; ++m) {
        if (t.diff_by_absdelta[m] < 0 || t.diff_by_absdelta[m] > t.pairs)
            throw InfeasibleTargets("d" + std::to_string(m) + " out of range");
        if (t.diff_by_absdelta[m] > 2 * m * b)
            throw InfeasibleTargets("d" + std::to_string(m) + " exceeds available band crossings");
    }
}

Outcome lookup(const TranslationTable& table, std::int64_t slot, Setting setting) {
    if (slot < 0 || slot >= table.n_slots) throw SlotOutOfRange(slot, table.n_slots);
    const std::int64_t idx = (slot + setting.index * table.block()) % table.n_slots;
    return table.entries[static_cast<std::size_t>(idx)];
}

TablePair generate_tables(const TableTargets& targets, std::uint64_t seed, std::int64_t max_iters) {
    validate_targets(targets);
    SeqRng rng(derive_seed(seed, static_cast<std::uint64_t>(StreamTag::TableLayout)));

    FamilyPlan plan;
    if (family_plan(targets, plan)) {
        const auto cols = layout_family(plan, targets.n_slots / 8, rng);
        return build_pair(cols, targets, seed, rng);
    }
    const auto cols = local_search(targets, max_iters, rng);
    return build_pair(cols, targets, seed, rng);
}

VerificationReport verify_tables(const TablePair& pair) {
    const TranslationTable& a = pair.alice;
    const TranslationTable& bt = pair.bob;
    if (a.n_slots != bt.n_slots) throw MismatchedSizes(a.n_slots, bt.n_slots);
    const std::int64_t n = a.n_slots;
    const std::int64_t blk = a.block();
    const TableTargets& t = pair.targets;

    VerificationReport rep;
    auto add_violation = [&](const std::string& id, std::int64_t expected, std::int64_t actual) {
        if (expected != actual) rep.violations.push_back({id, expected, actual});
    };

    // C1 plus the setting-marginal invariance: the per-setting detection count
    // must be the same for all four settings on each side.
    std::array<std::int64_t, 4> singles_a{}, singles_b{};
    for (int j = 0; j < 4; ++j) {
        for (std::int64_t s = 0; s < n; ++s) {
            const std::int64_t idx = (s + j * blk) % n;
            if (detected(a.entries[idx])) ++singles_a[j];
            if (detected(bt.entries[idx])) ++singles_b[j];
        }
        add_violation("C1[A,setting=" + std::to_string(j) + "]", t.singles, singles_a[j]);
        add_violation("C1[B,setting=" + std::to_string(j) + "]", t.singles, singles_b[j]);
    }
    rep.singles_a = singles_a[0];
    rep.singles_b = singles_b[0];

    // C2/C3/C4: exhaustive sweep over every slot and all 16 setting pairs.
    std::array<std::array<std::int64_t, 4>, 4> cell_pairs{}, cell_diff{};
    for (int j = 0; j < 4; ++j) {
        for (int k = 0; k < 4; ++k) {
            std::int64_t np = 0, nd = 0;
            for (std::int64_t s = 0; s < n; ++s) {
                const Outcome oa = a.entries[(s + j * blk) % n];
                const Outcome ob = bt.entries[(s + k * blk) % n];
                if (!detected(oa) || !detected(ob)) continue;
                ++np;
                if (oa != ob) ++nd;
            }
            cell_pairs[j][k] = np;
            cell_diff[j][k] = nd;
            const std::string jk = "[j=" + std::to_string(j) + ",k=" + std::to_string(k) + "]";
            add_violation("C2" + jk, t.pairs, np);
            if (j == k)
                add_violation("C3" + jk, 0, nd);
            else
                add_violation("C4" + jk, t.diff_by_absdelta[std::abs(j - k)], nd);
        }
    }

    for (int d = -3; d <= 3; ++d) {
        const int j = d < 0 ? -d : 0;
        const int k = d < 0 ? 0 : d;
        rep.pairs_by_shift[d] = cell_pairs[j][k];
        rep.diff_by_shift[d] = cell_diff[j][k];
    }

    for (int m = 0; m < 4; ++m) {
        const std::int64_t np = cell_pairs[0][m];
        const std::int64_t nd = cell_diff[0][m];
        rep.e_by_absdelta[m] = np > 0 ? Rational(np - 2 * nd, np) : Rational(0, 1);
    }

    auto cell_e = [&](int j, int k) {
        const std::int64_t np = cell_pairs[j][k];
        return np > 0 ? Rational(np - 2 * cell_diff[j][k], np) : Rational(0, 1);
    };
    rep.chsh_s = (cell_e(0, 1) + cell_e(2, 1)).abs() + (cell_e(2, 3) - cell_e(0, 3)).abs();

    rep.pass = rep.violations.empty();
    return rep;
}

void save_table(const TranslationTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "QKDHORSE-TABLE v1 N=" << table.n_slots << " ROLE=" << role_char(table.role) << "\n";
    for (std::int64_t i = 0; i < table.n_slots; i += 1000) {
        std::string line(1000, '.');
        for (int j = 0; j < 1000; ++j) line[j] = outcome_char(table.entries[i + j]);
        out << line << "\n";
    }
    out << "END\n";
    if (!out) throw Error("write failed: " + path);
}

TranslationTable load_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string data = ss.str();

    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= data.size()) {
        const std::size_t nl = data.find('\n', pos);
        if (nl == std::string::npos) {
            if (pos < data.size()) lines.push_back(data.substr(pos));
            break;
        }
        lines.push_back(data.substr(pos, nl - pos));
        pos = nl + 1;
    }
    if (lines.empty()) throw TableFormatError(1, "empty file");

    // Header: QKDHORSE-TABLE v1 N=<n> ROLE=<A|B>
    std::istringstream hdr(lines[0]);
    std::string magic, version, nfield, rolefield;
    hdr >> magic >> version >> nfield >> rolefield;
    if (magic != "QKDHORSE-TABLE" || version != "v1")
        throw TableFormatError(1, "bad header magic");
    if (nfield.rfind("N=", 0) != 0) throw TableFormatError(1, "missing N= field");
    std::int64_t n = 0;
    try {
        n = std::stoll(nfield.substr(2));
    } catch (const std::exception&) {
        throw TableFormatError(1, "unparsable N");
    }
    if (n <= 0 || n % 8000 != 0) throw TableFormatError(1, "N must be a positive multiple of 8000");
    if (rolefield != "ROLE=A" && rolefield != "ROLE=B") throw RoleMissing();

    TranslationTable table;
    table.n_slots = n;
    table.role = rolefield == "ROLE=A" ? Role::Alice : Role::Bob;
    table.entries.reserve(n);

    const std::size_t expected_lines = static_cast<std::size_t>(n / 1000);
    std::size_t li = 1;
    for (; li < lines.size() && lines[li] != "END"; ++li) {
        const std::string& line = lines[li];
        if (li - 1 >= expected_lines)
            throw LengthMismatch("more than " + std::to_string(expected_lines) + " data lines");
        if (line.size() != 1000)
            throw LengthMismatch("line " + std::to_string(li + 1) + " has " +
                                 std::to_string(line.size()) + " characters, expected 1000");
        for (char c : line) {
            switch (c) {
            case '0': table.entries.push_back(Outcome::Zero); break;
            case '1': table.entries.push_back(Outcome::One); break;
            case '.': table.entries.push_back(Outcome::NoDetect); break;
            default:
                throw TableFormatError(static_cast<int>(li + 1),
                                       std::string("invalid character '") + c + "'");
            }
        }
    }
    if (li == lines.size()) throw TableFormatError(static_cast<int>(li + 1), "missing END line");
    if (static_cast<std::int64_t>(table.entries.size()) != n)
        throw LengthMismatch("data has " + std::to_string(table.entries.size()) +
                             " slots, header says " + std::to_string(n));
    for (std::size_t rest = li + 1; rest < lines.size(); ++rest)
        if (!lines[rest].empty())
            throw TableFormatError(static_cast<int>(rest + 1), "content after END");
    return table;
}

} // namespace qkdhorse
