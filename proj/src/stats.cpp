#include "qkdhorse/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qkdhorse {

namespace {

constexpr int kMaxIter = 1000;
constexpr double kEps = 1e-15;
const double kFpMin = std::numeric_limits<double>::min() / kEps;

// Lower regularized incomplete gamma P(a,x) by series expansion (x < a+1).
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a,x) by modified Lentz continued
// fraction (x >= a+1).
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

} // namespace

double reg_gamma_upper(double a, double x) {
    if (a <= 0.0) throw std::invalid_argument("reg_gamma_upper: a must be positive");
    if (x < 0.0) throw std::invalid_argument("reg_gamma_upper: x must be nonnegative");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double chi2_sf(double x, int dof) {
    if (dof < 1) throw std::invalid_argument("chi2_sf: dof must be >= 1");
    if (x <= 0.0) return 1.0;
    return reg_gamma_upper(0.5 * dof, 0.5 * x);
}

Chi2Result chi2_independence(const std::vector<std::vector<std::int64_t>>& counts) {
    const std::size_t rows = counts.size();
    const std::size_t cols = rows ? counts[0].size() : 0;

    std::vector<std::int64_t> row_tot(rows, 0), col_tot(cols, 0);
    std::int64_t total = 0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            row_tot[r] += counts[r][c];
            col_tot[c] += counts[r][c];
            total += counts[r][c];
        }

    int live_rows = 0, live_cols = 0;
    for (auto t : row_tot)
        if (t > 0) ++live_rows;
    for (auto t : col_tot)
        if (t > 0) ++live_cols;

    Chi2Result res;
    res.dof = (live_rows - 1) * (live_cols - 1);
    if (total == 0 || res.dof < 1) {
        res.dof = res.dof < 0 ? 0 : res.dof;
        return res; // degenerate: no evidence, p = 1
    }

    double stat = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (row_tot[r] == 0) continue;
        for (std::size_t c = 0; c < cols; ++c) {
            if (col_tot[c] == 0) continue;
            const double expected = static_cast<double>(row_tot[r]) *
                                    static_cast<double>(col_tot[c]) / static_cast<double>(total);
            const double dev = static_cast<double>(counts[r][c]) - expected;
            stat += dev * dev / expected;
        }
    }
    res.statistic = stat;
    res.p_value = chi2_sf(stat, res.dof);
    return res;
}

double two_proportion_z(std::int64_t hits1, std::int64_t n1, std::int64_t hits2, std::int64_t n2) {
    if (n1 <= 0 || n2 <= 0) throw std::invalid_argument("two_proportion_z: empty sample");
    const double p1 = static_cast<double>(hits1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(hits2) / static_cast<double>(n2);
    const double pooled = static_cast<double>(hits1 + hits2) / static_cast<double>(n1 + n2);
    const double se =
        std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    if (se == 0.0) return 0.0;
    return (p1 - p2) / se;
}

} // namespace qkdhorse
