// Star discrepancy in exact rational arithmetic, Koksma defect checks
// (plain and truncated), rotation orbits with certified phases, and the
// punctured grids R_s feeding the Gordon estimates.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qpg/contfrac.hpp"
#include "qpg/errors.hpp"
#include "qpg/numeric.hpp"
#include "qpg/periodic.hpp"

namespace qpg {

// ---------------------------------------------------------------------------
// point sets on the circle

struct PointSet {
    std::vector<CirclePoint> points;  // values exact rationals in [0,1)
    std::string provenance;

    int n() const { return int(points.size()); }

    // worst certified distance to the true (irrational-frequency) point
    Rat max_err() const {
        Rat m(0);
        for (const auto& p : points)
            if (p.err > m) m = p.err;
        return m;
    }
};

// wrap a list of exact rationals (err = 0)
inline PointSet exact_points(const std::vector<Rat>& xs, std::string provenance = "explicit") {
    PointSet ps;
    ps.provenance = std::move(provenance);
    ps.points.reserve(xs.size());
    for (const auto& x : xs) ps.points.push_back(CirclePoint{mod1(x), Rat(0)});
    return ps;
}

// ---------------------------------------------------------------------------
// exact star discrepancy, sup_{0<t<=1} |#{k: x_k in [0,t)}/n - t|, via the
// sorted-points formula max_i max(i/n - x_(i), x_(i) - (i-1)/n)

inline Rat star_discrepancy(const PointSet& ps) {
    require(!ps.points.empty(), Err::EmptySet, "star discrepancy of an empty set");
    const long n = long(ps.points.size());
    // scale to a common denominator first: orbit points share the convergent
    // denominator, so the sort compares machine integers (or short mpz)
    // instead of cross-multiplying rationals at every step
    Int L(1);
    for (const auto& p : ps.points) L = lcm(L, Int(p.value.get_den()));
    std::vector<Int> a;
    a.reserve(ps.points.size());
    for (const auto& p : ps.points)
        a.push_back(Int(p.value.get_num()) * (L / p.value.get_den()));
    std::sort(a.begin(), a.end());
    Int best(0);
    for (long i = 1; i <= n; ++i) {
        Int na = n * a[i - 1];
        Int hi = i * L - na;        // i/n - x_(i), over the grid nL
        Int lo = na - (i - 1) * L;  // x_(i) - (i-1)/n
        if (hi > best) best = hi;
        if (lo > best) best = lo;
    }
    return ratio(best, n * L);
}

// ---------------------------------------------------------------------------
// rotation orbits through the deepest convergent stand-in

// {x + j m alpha}_{j=0..n-1}; every phase carries the certified distance
// j*m*|alpha - standin| to the true orbit point, required <= tol
inline PointSet rotation_orbit(const Rat& x, const ContinuedFraction& cf, long n,
                               long stride = 1, const Rat& tol = Rat(1, 1000000)) {
    require(n >= 1, Err::EmptySet, "rotation orbit needs n >= 1");
    require(stride >= 1, Err::BadConfig, "rotation orbit stride must be positive");
    phase(x, cf, Int(stride) * Int(n - 1), tol);  // certify the worst index up front
    PointSet ps;
    ps.provenance = "orbit x=" + x.get_str() + " stride=" + std::to_string(stride) +
                    " n=" + std::to_string(n) + " alpha=" + cf.value().get_str();
    ps.points.reserve(std::size_t(n));
    Rat step = mod1(Rat(stride) * cf.value());
    Rat per_step_err = Rat(stride) * cf.value_error();
    Rat cur = mod1(x), err(0);
    for (long j = 0; j < n; ++j) {
        ps.points.push_back(CirclePoint{cur, err});
        cur += step;
        if (cur >= 1) cur -= 1;
        err += per_step_err;
    }
    return ps;
}

// per-k orbit discrepancy with the 2/q_k bound (CSV rows for the CLI)
struct OrbitDiscrepancyRow {
    int k = 0;
    Int qk;
    Rat dstar;
    Rat bound;   // 2/q_k
    Rat margin;  // bound - dstar, nonnegative for every convergent denominator
};

inline std::vector<OrbitDiscrepancyRow> orbit_discrepancy_table(const Rat& x,
                                                                const ContinuedFraction& cf,
                                                                int k_min, int k_max) {
    require(k_min >= 1 && k_min <= k_max, Err::BadConfig, "bad k range");
    require(k_max + 1 <= cf.depth(), Err::InsufficientDepth,
            "orbit table needs depth >= k_max + 1 so the stand-in shares the prefix");
    std::vector<OrbitDiscrepancyRow> rows;
    for (int k = k_min; k <= k_max; ++k) {
        OrbitDiscrepancyRow r;
        r.k = k;
        r.qk = cf.Q(k);
        require(r.qk.fits_slong_p() && r.qk <= 20000000, Err::BadConfig,
                "orbit of q_k points is too large to materialize");
        long n = r.qk.get_si();
        // the stand-in phases are exact, so tol only guards the true-orbit
        // transfer; 1 always certifies (n-1)*|alpha - p_K/q_K| < 1
        r.dstar = star_discrepancy(rotation_orbit(x, cf, n, 1, Rat(1)));
        r.bound = ratio(2, r.qk);
        r.margin = r.bound - r.dstar;
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Koksma defect: |mean over the set - integral| <= Var(f) * D*

struct KoksmaReport {
    int n = 0;
    Rat dstar;
    bool exact = false;  // defect and bound both carried in rational arithmetic
    Rat defect_q;        // meaningful when exact
    Rat bound_q;
    double defect = 0.0;
    double bound = 0.0;
    double allowance = 0.0;  // kept 0: the stand-in points are exact rationals
    double margin = 0.0;     // bound + allowance - defect
    Rat phase_err;           // informational: worst certified distance to the true orbit
    bool pass = false;
};

namespace detail {

inline KoksmaReport koksma_impl(const PeriodicFunction& f, const PointSet& ps,
                                const std::optional<Rat>& integral_q, double integral_d) {
    require(!ps.points.empty(), Err::EmptySet, "koksma defect of an empty set");
    auto var = total_variation(f);
    require(!var.infinite, Err::UnboundedVariation,
            "Koksma needs bounded variation; clamp the function first");
    KoksmaReport r;
    r.n = ps.n();
    r.dstar = star_discrepancy(ps);
    r.phase_err = ps.max_err();

    bool exact_mean = bool(f.fq) && bool(integral_q);
    Rat sum_q(0);
    double sum_d = 0.0;
    for (const auto& p : ps.points) {
        if (exact_mean) sum_q += f.fq(p.value);
        sum_d += f.fd(to_double(p.value));
    }
    double mean_d = sum_d / double(r.n);

    r.exact = exact_mean && var.exact;
    if (r.exact) {
        r.defect_q = rat_abs(*integral_q - sum_q / Rat(r.n));
        r.bound_q = var.value_q * r.dstar;
        r.defect = to_double(r.defect_q);
        r.bound = to_double(r.bound_q);
        r.pass = r.defect_q <= r.bound_q;
    } else {
        r.defect = std::abs(integral_d - mean_d);
        r.bound = var.value * to_double(r.dstar);
        r.pass = r.defect <= r.bound + 1e-12;
    }
    r.margin = r.bound + r.allowance - r.defect;
    return r;
}

}  // namespace detail

inline KoksmaReport koksma_defect(const PeriodicFunction& f, const PointSet& ps,
                                  const Rat& integral) {
    return detail::koksma_impl(f, ps, integral, to_double(integral));
}

inline KoksmaReport koksma_defect(const PeriodicFunction& f, const PointSet& ps,
                                  double integral) {
    return detail::koksma_impl(f, ps, std::nullopt, integral);
}

// ---------------------------------------------------------------------------
// truncated Koksma: for every base phase x,
//   (1/n) sum_j [h]_B(x + r_j)  <=  integral([h]_B) + 2 D* Var[h]_B,
// the set where the UNtruncated mean exceeds that bound is covered by
// U_j {x : h(x + r_j) > B}, and its measure is at most (n/B) int_{h>B} h

struct TruncatedKoksmaPhase {
    double x = 0.0;
    double clamped_mean = 0.0;
    double raw_mean = 0.0;       // untruncated; may be +inf near a pole
    bool raw_exceeds = false;    // raw_mean > bound
    bool in_union = false;       // some j has h(x + r_j) > B
};

struct TruncatedKoksmaReport {
    int n = 0;
    Rat dstar;
    double B = 0.0;
    double integral_clamped = 0.0;  // int_0^1 [h]_B
    double var_clamped = 0.0;       // Var [h]_B
    bool var_exact = false;
    double bound = 0.0;  // integral_clamped + 2 D* var_clamped
    int phases_tested = 0;
    double worst_clamped_mean = -HUGE_VAL;
    double worst_margin = HUGE_VAL;  // min over phases of bound - clamped_mean
    std::vector<TruncatedKoksmaPhase> exceedances;  // phases with raw_exceeds
    bool exceedances_covered = true;  // every raw exceedance sits in the union
    double markov_bound = 0.0;        // (n/B) int_{h>B} h
    double exceed_fraction = 0.0;     // grid fraction with raw_exceeds
    bool pass = false;
};

inline TruncatedKoksmaReport truncated_koksma(const PeriodicFunction& h, const Rat& B,
                                              const PointSet& ps, int grid = 512) {
    require(!ps.points.empty(), Err::EmptySet, "truncated Koksma needs a point set");
    require(B > 0, Err::BadBounds, "truncation level must be positive");
    require(grid >= 1, Err::BadConfig, "phase grid must be nonempty");

    TruncatedKoksmaReport r;
    r.n = ps.n();
    r.dstar = star_discrepancy(ps);
    r.B = to_double(B);

    PeriodicFunction hB = truncate(h, B);
    auto var = total_variation(hB);
    require(!var.infinite, Err::UnboundedVariation, "truncation left unbounded variation");
    r.var_clamped = var.value;
    r.var_exact = var.exact;
    r.integral_clamped = integrate_value(hB, 1e-10);
    r.bound = r.integral_clamped + 2.0 * to_double(r.dstar) * r.var_clamped;

    std::vector<double> shifts;
    shifts.reserve(ps.points.size());
    for (const auto& p : ps.points) shifts.push_back(to_double(p.value));

    // base phases: an equispaced grid with an offset avoiding exact overlap
    // with the r_j, plus deliberate probes within a few ulps of each pole so
    // the exceedance branch is actually exercised when h has singularities
    std::vector<double> xs;
    xs.reserve(std::size_t(grid) + 8 * h.singular_points.size());
    for (int i = 0; i < grid; ++i) xs.push_back((i + 0.3183) / double(grid));
    for (const auto& sq : h.singular_points) {
        double s = to_double(sq);
        for (std::size_t j = 0; j < shifts.size() && j < 4; ++j) {
            for (double off : {0.0, 1e-15}) {
                double x = s - shifts[j] - off;
                xs.push_back(x - std::floor(x));
            }
        }
    }

    auto wrap = [](double t) { return t - std::floor(t); };
    int exceed_grid = 0;
    for (double x : xs) {
        TruncatedKoksmaPhase row;
        row.x = x;
        double sc = 0.0, sr = 0.0;
        for (double rj : shifts) {
            double t = wrap(x + rj);
            sc += hB.fd(t);
            double hv = h.fd(t);
            sr += std::isinf(hv) ? HUGE_VAL : hv;
            if (hv > r.B) row.in_union = true;
        }
        row.clamped_mean = sc / double(r.n);
        row.raw_mean = sr / double(r.n);
        row.raw_exceeds = row.raw_mean > r.bound;
        if (row.raw_exceeds) {
            ++exceed_grid;
            r.exceedances.push_back(row);
            if (!row.in_union) r.exceedances_covered = false;
        }
        if (row.clamped_mean > r.worst_clamped_mean) r.worst_clamped_mean = row.clamped_mean;
        double margin = r.bound - row.clamped_mean;
        if (margin < r.worst_margin) r.worst_margin = margin;
        ++r.phases_tested;
    }
    r.exceed_fraction = double(exceed_grid) / double(r.phases_tested);
    r.markov_bound = double(r.n) / r.B * tail_integral_above(h, r.B);
    // quadrature tolerance plus accumulated evaluation roundoff
    r.pass = r.worst_margin >= -1e-8 && r.exceedances_covered;
    return r;
}

// ---------------------------------------------------------------------------
// punctured Gordon grids
//   R_s = {x + j alpha}_{j<s}  union  {x + j alpha + delta}_{s<j<=q_k-1},
// q_k - 1 points; within the regime |delta| < 1/(10 q_k) their star
// discrepancy obeys D* <= 3/q_k

struct GordonGrid {
    PointSet ps;
    Int qk;
    long s = 0;
    Rat delta;
    Rat dstar;
    Rat bound;                     // 3/q_k
    bool within_bound = false;     // dstar <= bound
    bool delta_within_spec = false;  // |delta| < 1/(10 q_k)
};

inline GordonGrid gordon_grid(const Rat& x, const ContinuedFraction& cf, int k, long s,
                              const Rat& delta, bool allow_large_delta = false,
                              const Rat& tol = Rat(1, 1000000)) {
    require(k >= 1, Err::BadConfig, "grid needs k >= 1");
    require(k + 1 <= cf.depth(), Err::InsufficientDepth,
            "grid at level k needs depth >= k+1 so the stand-in shares the prefix");
    GordonGrid g;
    g.qk = cf.Q(k);
    require(g.qk >= 2, Err::BadConfig, "q_k must be at least 2 for a nonempty grid");
    require(g.qk.fits_slong_p() && g.qk <= 20000000, Err::BadConfig,
            "grid of q_k - 1 points is too large to materialize");
    require(s >= 0 && Int(s) <= g.qk - 1, Err::BadConfig, "puncture index out of range");
    g.s = s;
    g.delta = delta;
    g.delta_within_spec = rat_abs(delta) < Rat(1, 10 * g.qk);
    if (!g.delta_within_spec)
        require(allow_large_delta, Err::DeltaTooLarge,
                "|delta| >= 1/(10 q_k); pass allow_large_delta to compute anyway");

    long n_total = g.qk.get_si();  // orbit indices run 0..q_k-1
    phase(x, cf, g.qk - 1, tol);
    g.ps.provenance = "gordon_grid x=" + x.get_str() + " k=" + std::to_string(k) +
                      " s=" + std::to_string(s) + " delta=" + delta.get_str();
    g.ps.points.reserve(std::size_t(n_total - 1));
    Rat step = mod1(cf.value());
    Rat per_step_err = cf.value_error();
    Rat cur = mod1(x), err(0);
    for (long j = 0; j < n_total; ++j) {
        if (j < s)
            g.ps.points.push_back(CirclePoint{cur, err});
        else if (j > s)
            g.ps.points.push_back(CirclePoint{mod1(cur + delta), err});
        cur += step;
        if (cur >= 1) cur -= 1;
        err += per_step_err;
    }
    g.dstar = star_discrepancy(g.ps);
    g.bound = ratio(3, g.qk);
    g.within_bound = g.dstar <= g.bound;
    // inside the stated delta regime the 3/q_k bound is a theorem; a
    // violation there means the grid or the discrepancy code is wrong
    if (g.delta_within_spec)
        require(g.within_bound, Err::NumericFailure, "D*(R_s) exceeded 3/q_k in regime");
    return g;
}

}  // namespace qpg
