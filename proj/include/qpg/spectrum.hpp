#pragma once

// finite-box diagnostics: Dirichlet truncations of the operator on [-N, N],
// eigenvalues by Sturm bisection, eigenvectors by inverse iteration, decay
// fits on the flanks, and Lyapunov-versus-beta regime scans that supply
// candidate energies to the Gordon checker. The boxes are surrogates only:
// nothing here claims a box eigenvalue belongs to the infinite operator.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <qpg/gordon.hpp>

namespace qpg {

// -------------------------------------------------------------- box operator

// symmetric tridiagonal truncation: diagonal V(n) = f(x + n alpha) for
// n in [-N, N], off-diagonals identically one, Dirichlet ends
struct BoxOperator {
    long N = 0;
    ValueTable<double> V;  // diagonal indexed by site
    std::string f_name;
    Rat x, alpha;

    long size() const { return 2 * N + 1; }
    double diag(long i) const { return V.at(i - N); }  // row index 0..2N
    double vmax() const {
        double m = 0;
        for (double v : V.v) m = std::max(m, std::abs(v));
        return m;
    }
};

inline BoxOperator build_box(const PeriodicFunction& f, const Rat& x, const ContinuedFraction& cf,
                             long N, const Rat& tol = Rat(1, 1000000)) {
    require(N >= 0, Err::BadConfig, "box needs N >= 0");
    auto P = potential_sequence<double>(f, x, cf, -N, N + 1, tol);
    BoxOperator op;
    op.N = N;
    op.V = std::move(P.V);
    op.f_name = P.f_name;
    op.x = P.x;
    op.alpha = P.alpha;
    return op;
}

// eigenvalue hull from the row sums
inline std::pair<double, double> gershgorin(const BoxOperator& op) {
    double lo = op.V.v.front(), hi = lo;
    for (double v : op.V.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo - 2, hi + 2};
}

// --------------------------------------------------------------- Sturm counts

// eigenvalues strictly below t, from the pivot signs of the LDL^T sweep; a
// vanishing pivot is clamped negative, so a pivot-exact hit counts as below
inline long sturm_count(const BoxOperator& op, double t) {
    const double pivmin = 1e-300;
    long count = 0;
    double q = 1;
    for (long i = 0; i < op.size(); ++i) {
        double d = op.diag(i) - t;
        q = i == 0 ? d : d - 1.0 / q;
        if (std::abs(q) < pivmin) q = -pivmin;
        if (q < 0) ++count;
    }
    return count;
}

struct SturmCount {
    long below = 0;        // eigenvalues strictly below t
    bool exact_hit = false;  // t itself is an eigenvalue (always simple here)
};

// exact rational count through the characteristic-polynomial recurrence
// p_i = (d_i - t) p_{i-1} - p_{i-2}. The off-diagonals never vanish, so the
// eigenvalues are simple, consecutive p_i never vanish together, and an
// interior zero contributes exactly one sign change whichever sign it is
// assigned; a terminal zero means t is an eigenvalue
inline SturmCount sturm_count_exact(const std::vector<Rat>& diag, const Rat& t) {
    require(!diag.empty(), Err::BadConfig, "empty diagonal");
    SturmCount out;
    long n = long(diag.size());
    Rat p_prev(1), p_prevprev(0);
    int sign_prev = 1;  // sign of p_0
    for (long i = 0; i < n; ++i) {
        Rat p = Rat(Rat(diag[size_t(i)] - t) * p_prev - p_prevprev);
        int s = sgn(p);
        if (s == 0) {
            if (i == n - 1) {
                out.exact_hit = true;
                break;
            }
            s = -sign_prev;
        }
        if (s != sign_prev) {
            ++out.below;
            sign_prev = s;
        }
        p_prevprev = p_prev;
        p_prev = p;
    }
    return out;
}

// the double diagonal lifted exactly (every double is a rational), so the
// exact count speaks about the very matrix the float routines factor
inline std::vector<Rat> exact_diag(const BoxOperator& op) {
    std::vector<Rat> d;
    d.reserve(op.V.v.size());
    for (double v : op.V.v) d.emplace_back(v);
    return d;
}

// ------------------------------------------------------------ eigenvalue scan

namespace detail {

// j-th smallest eigenvalue (1-based) by bisection on the count, given
// count(lo) < j <= count(hi)
inline double bisect_index(const BoxOperator& op, long j, double lo, double hi, double tol) {
    while (hi - lo > tol) {
        double mid = lo + (hi - lo) / 2;
        if (mid <= lo || mid >= hi) break;  // tol under the double spacing
        if (sturm_count(op, mid) >= j) hi = mid;
        else lo = mid;
    }
    return lo + (hi - lo) / 2;
}

}  // namespace detail

// all eigenvalues in [a, b] to absolute tolerance tol, sorted; the count is
// exact (Sturm counts at the endpoints), each root gets its own bisection.
// Endpoint membership is resolved to a pivot ulp.
inline std::vector<double> eigenvalues(const BoxOperator& op, double a, double b,
                                       double tol = 1e-10) {
    require(a <= b, Err::BadBounds, "empty energy interval");
    require(tol > 0, Err::BadConfig, "tol must be positive");
    auto hull = gershgorin(op);
    double lo = std::max(a, hull.first - 1);
    double hi = std::min(b, hull.second + 1);
    if (lo > hi) return {};
    long ca = sturm_count(op, lo);
    long cb = sturm_count(op, std::nextafter(hi, std::numeric_limits<double>::infinity()));
    std::vector<double> out;
    out.reserve(size_t(cb - ca));
    for (long j = ca + 1; j <= cb; ++j) out.push_back(detail::bisect_index(op, j, lo, hi, tol));
    return out;
}

// j-th smallest of all 2N+1 eigenvalues, 1-based; the median sits at N+1
inline double eigenvalue_by_index(const BoxOperator& op, long j, double tol = 1e-12) {
    require(j >= 1 && j <= op.size(), Err::BadConfig, "eigenvalue index out of range");
    auto hull = gershgorin(op);
    return detail::bisect_index(op, j, hull.first - 1, hull.second + 1, tol);
}

// ----------------------------------------------------------- inverse iteration

namespace detail {

// partial-pivoted LU of (T - shift) for the unit-off-diagonal tridiagonal;
// row swaps fill a second superdiagonal. Pivots never fall below one except
// the final corner, which is clamped so a singular shift yields the huge
// solve inverse iteration wants.
struct TriLU {
    long n = 0;
    std::vector<double> d, du, du2, mult;
    std::vector<char> swapped;

    TriLU(const BoxOperator& op, double shift) {
        n = op.size();
        d.resize(size_t(n));
        for (long i = 0; i < n; ++i) d[size_t(i)] = op.diag(i) - shift;
        if (n > 1) {
            du.assign(size_t(n - 1), 1.0);
            mult.assign(size_t(n - 1), 0.0);
            swapped.assign(size_t(n - 1), 0);
        }
        if (n > 2) du2.assign(size_t(n - 2), 0.0);
        for (long i = 0; i + 1 < n; ++i) {
            size_t k = size_t(i);
            if (std::abs(d[k]) >= 1.0) {  // subdiagonal entry is exactly one
                mult[k] = 1.0 / d[k];
                d[k + 1] -= mult[k] * du[k];
            } else {
                double fact = d[k];  // divided by the unit subdiagonal
                double temp = d[k + 1];
                swapped[k] = 1;
                mult[k] = fact;
                d[k] = 1.0;
                d[k + 1] = du[k] - fact * temp;
                du[k] = temp;
                if (i + 2 < n) {
                    du2[k] = 1.0;  // the swapped-in row's untouched superdiagonal
                    du[k + 1] = -fact;
                }
            }
        }
        if (d[size_t(n - 1)] == 0) d[size_t(n - 1)] = 1e-250;
    }

    void solve(std::vector<double>& b) const {
        for (long i = 0; i + 1 < n; ++i) {
            size_t k = size_t(i);
            if (swapped[k]) std::swap(b[k], b[k + 1]);
            b[k + 1] -= mult[k] * b[k];
        }
        b[size_t(n - 1)] /= d[size_t(n - 1)];
        if (n > 1) b[size_t(n - 2)] = (b[size_t(n - 2)] - du[size_t(n - 2)] * b[size_t(n - 1)]) /
                                      d[size_t(n - 2)];
        for (long i = n - 3; i >= 0; --i) {
            size_t k = size_t(i);
            b[k] = (b[k] - du[k] * b[k + 1] - du2[k] * b[k + 2]) / d[k];
        }
    }
};

inline std::vector<double> box_apply(const BoxOperator& op, const std::vector<double>& w) {
    long n = op.size();
    std::vector<double> y(size_t(n), 0.0);
    for (long i = 0; i < n; ++i) {
        double s = op.diag(i) * w[size_t(i)];
        if (i > 0) s += w[size_t(i - 1)];
        if (i + 1 < n) s += w[size_t(i + 1)];
        y[size_t(i)] = s;
    }
    return y;
}

inline double norm2(const std::vector<double>& w) {
    double s = 0;
    for (double v : w) s += v * v;
    return std::sqrt(s);
}

}  // namespace detail

struct DecayFit {
    double rate = 0;      // slope of -log|psi| per site on the flanks
    double goodness = 0;  // R^2 of the fit
    long sites = 0;       // points entering the fit
    long center = 0;      // localization center, site coordinates
};

// least-squares slope of log|psi| against the distance from the localization
// center, taken over the signal window: the contiguous run of sites around
// the center whose amplitude stays above the inverse-iteration noise floor
// (about 1e-13 of the peak; beyond that the solve returns flat roundoff, not
// the eigenfunction). Of that window the central tenth (plateau) and one
// twentieth at each end (boundary or floor contamination) are excluded
inline DecayFit decay_fit(const std::vector<double>& psi, long N) {
    DecayFit fit;
    long n = long(psi.size());
    if (n == 0) return fit;
    long ic = 0;
    for (long i = 1; i < n; ++i)
        if (std::abs(psi[size_t(i)]) > std::abs(psi[size_t(ic)])) ic = i;
    fit.center = ic - N;
    double floor = std::max(1e-280, std::abs(psi[size_t(ic)]) * 1e-13);
    long l = ic, r = ic;
    while (l > 0 && std::abs(psi[size_t(l - 1)]) > floor) --l;
    while (r + 1 < n && std::abs(psi[size_t(r + 1)]) > floor) ++r;
    long span = r - l + 1;
    long band = (span * 5 + 99) / 100;  // 5% of the window, rounded up
    double su = 0, sy = 0, suu = 0, suy = 0, syy = 0;
    long m = 0;
    for (long i = l + band; i <= r - band; ++i) {
        if (std::labs(i - ic) <= band) continue;
        double u = double(std::labs(i - ic));
        double y = std::log(std::abs(psi[size_t(i)]));
        su += u;
        sy += y;
        suu += u * u;
        suy += u * y;
        syy += y * y;
        ++m;
    }
    fit.sites = m;
    if (m < 2) return fit;
    double det = double(m) * suu - su * su;
    if (det <= 0) return fit;
    double slope = (double(m) * suy - su * sy) / det;
    fit.rate = -slope;
    double ssres = 0;
    double intercept = (sy - slope * su) / double(m);
    // recompute residual sum from the moments
    ssres = syy - 2 * slope * suy - 2 * intercept * sy + slope * slope * suu +
            2 * slope * intercept * su + double(m) * intercept * intercept;
    double sstot = syy - sy * sy / double(m);
    fit.goodness = sstot > 1e-30 ? std::max(0.0, 1.0 - ssres / sstot) : (ssres < 1e-30 ? 1.0 : 0.0);
    return fit;
}

struct EigenPair {
    double energy = 0;         // Rayleigh quotient of the returned vector
    std::vector<double> psi;   // unit vector, site n at psi[n + N]
    double residual = 0;       // ||H psi - energy psi||
    DecayFit decay;
    bool degenerate = false;   // another eigenvalue inside the cluster window
    int iterations = 0;
};

// inverse iteration at shift E, deterministic start, the residual-minimizing
// iterate kept. The returned energy is the Rayleigh quotient, which names
// the eigenvalue the iteration actually converged to; NotAnEigenvalue fires
// when that sits further than tol from the requested E (the shift was not
// near an eigenvalue) or the residual bound 1e-8 (2 + max|V|) is unreachable
inline EigenPair eigenvector(const BoxOperator& op, double E, double tol = 1e-8) {
    require(tol > 0, Err::BadConfig, "tol must be positive");
    long n = op.size();
    detail::TriLU lu(op, E);
    Rng rng(0x5eedba11);  // fixed: repeat runs must be bit-identical
    std::vector<double> w(size_t(n), 0.0);
    for (auto& wi : w) wi = rng.uniform(-1, 1);
    double nw = detail::norm2(w);
    for (auto& wi : w) wi /= nw;

    const double bound = 1e-8 * (2 + op.vmax());
    EigenPair best;
    best.residual = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= 12; ++it) {
        lu.solve(w);
        nw = detail::norm2(w);
        if (!(nw > 0) || !std::isfinite(nw)) break;
        for (auto& wi : w) wi /= nw;
        auto Tw = detail::box_apply(op, w);
        double rho = 0;
        for (long i = 0; i < n; ++i) rho += w[size_t(i)] * Tw[size_t(i)];
        double res = 0;
        for (long i = 0; i < n; ++i) {
            double r = Tw[size_t(i)] - rho * w[size_t(i)];
            res += r * r;
        }
        res = std::sqrt(res);
        if (res < best.residual) {
            best.energy = rho;
            best.psi = w;
            best.residual = res;
            best.iterations = it;
        }
        if (res <= 1e-13 * (2 + op.vmax())) break;
    }
    require(best.residual <= bound, Err::NotAnEigenvalue,
            "inverse iteration cannot reach the residual bound at this shift");
    require(std::abs(best.energy - E) <= std::max(tol, bound), Err::NotAnEigenvalue,
            "no eigenvalue within tol of the requested energy");

    // another eigenvalue inside the window makes the pair a near-degenerate
    // cluster: the vector returned is the residual-minimizing one
    double win = std::max(10 * tol, 1e-9 * (2 + op.vmax()));
    best.degenerate =
        sturm_count(op, best.energy + win) - sturm_count(op, best.energy - win) >= 2;
    best.decay = decay_fit(best.psi, op.N);
    return best;
}

// ---------------------------------------------------------------- regime scan

struct RegimeRow {
    double E = 0;
    double L_hat = 0;
    double beta_hat = 0;
    std::string label;  // SUBCRITICAL / GORDON / LOCALIZED-SIDE
    double nearest_eigenvalue = 0;
    double eigen_distance = 0;
    bool gordon_candidate = false;  // GORDON label on a box eigenvalue
};

struct RegimeScan {
    long N = 0;
    double beta_hat = 0;
    double zero_tol = 0;  // the L ~ 0 resolution of the estimator at this n
    std::vector<double> spectrum;  // all box eigenvalues
    std::vector<RegimeRow> rows;
};

// classify each energy by measured Lyapunov rate against the frequency's
// repetition rate: SUBCRITICAL when L is below the estimator's own
// resolution 2 log(n)/n (bounded products grow at most linearly), GORDON
// when 0 < L < beta, LOCALIZED-SIDE otherwise. Rows carry the distance to
// the nearest box eigenvalue; a GORDON row sitting on one (within
// candidate_tol) is flagged as a verdict candidate
inline RegimeScan regime_scan(const PeriodicFunction& f, const Rat& x,
                              const ContinuedFraction& cf, const std::vector<double>& E_grid,
                              long N, long n_lyap, int phases, double candidate_tol = 1e-6) {
    require(!E_grid.empty(), Err::BadConfig, "empty energy grid");
    require(phases >= 1, Err::BadConfig, "need at least one phase");
    RegimeScan scan;
    scan.N = N;
    auto op = build_box(f, x, cf, N);
    auto hull = gershgorin(op);
    scan.spectrum = eigenvalues(op, hull.first, hull.second, 1e-10);
    scan.beta_hat = beta_estimate(cf).beta_hat;
    scan.zero_tol = 2 * std::log(double(n_lyap)) / double(n_lyap);

    std::vector<Rat> xs;
    for (int i = 0; i < phases; ++i) xs.push_back(mod1(Rat(x + ratio(Int(i), Int(phases)))));
    auto points = exact_points(xs, "regime scan phase grid");

    for (double E : E_grid) {
        RegimeRow row;
        row.E = E;
        row.beta_hat = scan.beta_hat;
        auto M = schrodinger(f, rat_of(E));
        row.L_hat = lyapunov(M, cf, n_lyap, points).value;
        if (row.L_hat <= scan.zero_tol) row.label = "SUBCRITICAL";
        else if (row.L_hat < scan.beta_hat) row.label = "GORDON";
        else row.label = "LOCALIZED-SIDE";

        auto it = std::lower_bound(scan.spectrum.begin(), scan.spectrum.end(), E);
        double dist = std::numeric_limits<double>::infinity(), nearest = 0;
        if (it != scan.spectrum.end() && std::abs(*it - E) < dist) {
            dist = std::abs(*it - E);
            nearest = *it;
        }
        if (it != scan.spectrum.begin() && std::abs(*(it - 1) - E) < dist) {
            dist = std::abs(*(it - 1) - E);
            nearest = *(it - 1);
        }
        row.nearest_eigenvalue = nearest;
        row.eigen_distance = dist;
        row.gordon_candidate = row.label == "GORDON" && dist <= candidate_tol;
        scan.rows.push_back(std::move(row));
    }
    return scan;
}

}  // namespace qpg
