#pragma once

#include <cstdint>
#include <vector>

namespace qkdhorse {

// Regularized upper incomplete gamma Q(a, x). Series for x < a+1, Lentz
// continued fraction otherwise; relative accuracy better than 1e-10 for
// a <= 32 (chi-square dof <= 64).
double reg_gamma_upper(double a, double x);

// Survival function of the chi-square distribution with dof degrees of
// freedom: P(X > x) = Q(dof/2, x/2).
double chi2_sf(double x, int dof);

struct Chi2Result {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
};

// Pearson chi-square test of independence on an r x c contingency table.
// Rows or columns with zero totals are dropped; a degenerate table (fewer
// than two informative rows or columns) yields p = 1.
Chi2Result chi2_independence(const std::vector<std::vector<std::int64_t>>& counts);

// Two-proportion z statistic (pooled).
double two_proportion_z(std::int64_t hits1, std::int64_t n1, std::int64_t hits2, std::int64_t n2);

} // namespace qkdhorse
