#pragma once

// 2x2 transfer cocycles over circle rotations: scaled matrix products,
// Lyapunov exponent estimates, the Schrodinger cocycle and its bounded
// factorization S = F * G, and the uniform upper bound engine that walks
// the block-decomposition ledger (block length, truncation level, block
// count) and reports the resulting finite-scale margin.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "contfrac.hpp"
#include "discrepancy.hpp"
#include "errors.hpp"
#include "numeric.hpp"
#include "periodic.hpp"

namespace qpg {

// ---------------------------------------------------------------- 2x2 algebra

template <class R>
struct Mat2 {
    R a{}, b{}, c{}, d{};  // row-major ((a, b), (c, d))

    Mat2 operator*(const Mat2& o) const {
        return {R(a * o.a + b * o.c), R(a * o.b + b * o.d),
                R(c * o.a + d * o.c), R(c * o.b + d * o.d)};
    }
    R det() const { return R(a * d - b * c); }
    R trace() const { return R(a + d); }

    R max_abs() const {
        using std::abs;
        R m = abs(a), t = abs(b);
        if (t > m) m = t;
        t = abs(c);
        if (t > m) m = t;
        t = abs(d);
        if (t > m) m = t;
        return m;
    }

    std::array<R, 2> apply(const R& v0, const R& v1) const {
        return {R(a * v0 + b * v1), R(c * v0 + d * v1)};
    }

    Mat2 inverse() const {
        R dt = det();
        require(dt != 0, Err::NumericFailure, "singular 2x2 matrix");
        return {R(d / dt), R(-b / dt), R(-c / dt), R(a / dt)};
    }
};

template <class R>
Mat2<R> mat2_id() {
    return {R(1), R(0), R(0), R(1)};
}

// largest singular value, from the closed form for the eigenvalues of M^T M:
// sigma_max^2 = (T + sqrt(T^2 - 4 det^2)) / 2 with T the sum of entry squares
template <class R>
R opnorm(const Mat2<R>& m) {
    using std::sqrt;
    R T = m.a * m.a + m.b * m.b + m.c * m.c + m.d * m.d;
    R dt = m.det();
    R disc = T * T - 4 * dt * dt;
    if (disc < 0) disc = 0;  // roundoff when sigma_min ~ sigma_max
    return sqrt(R((T + sqrt(disc)) / 2));
}

// ||M^{-1}|| = 1 / sigma_min = sigma_max / |det|
template <class R>
R inv_opnorm(const Mat2<R>& m) {
    using std::abs;
    R dt = m.det();
    require(dt != 0, Err::NumericFailure, "singular matrix has no inverse norm");
    return R(opnorm(m) / abs(dt));
}

namespace detail {

inline bool finite_val(double x) { return std::isfinite(x); }
inline bool finite_val(const BigReal& x) {
    return x == x && abs(x) != std::numeric_limits<BigReal>::infinity();
}

}  // namespace detail

// running product with the scale factored out: the stored matrix is kept with
// max-entry in [1/2, 2], everything beyond that lives in log_scale, so norms
// of exponentially growing products never leave the floating range
template <class R>
struct ScaledProduct {
    Mat2<R> m = mat2_id<R>();
    R log_scale = R(0);
    R det_log_acc = R(0);  // sum of log |det factor|, the algebraic target
    long steps = 0;
    bool singular_factor = false;

    void absorb(const Mat2<R>& f) {
        R dtf = f.det();
        if (dtf == R(0)) {
            singular_factor = true;
        } else if (dtf != R(1)) {  // Schrodinger factors have det exactly 1
            using std::abs;
            using std::log;
            det_log_acc += log(abs(dtf));
        }
        m = f * m;  // new factor on the left: M_{n+1} = A_n M_n
        ++steps;
        R s = m.max_abs();
        if (!(s >= R(0)) || !detail::finite_val(s))
            fail(Err::PrecisionLoss, "non-finite entries in scaled product");
        if (s == R(0)) fail(Err::NumericFailure, "scaled product vanished");
        if (s < R(1) / 2 || s > R(2)) {
            using std::log;
            m.a /= s;
            m.b /= s;
            m.c /= s;
            m.d /= s;
            log_scale += log(s);
        }
    }

    R norm_log() const {
        using std::log;
        return R(log_scale + log(opnorm(m)));
    }
    R inv_norm_log() const {
        using std::log;
        return R(log(inv_opnorm(m)) - log_scale);
    }
    // log |det| of the represented product, 2 log_scale + log |det m|; -inf
    // when the stored determinant has cancelled away entirely.  The stored
    // det carries absolute roundoff ~ ulp, so this is resolvable only while
    // e^{2 log_scale} stays under tol/ulp; hence det_defect is certified on
    // short windows at 53 bits and through the Gordon scale at 261 bits.
    R det_log() const {
        using std::abs;
        using std::log;
        R dt = m.det();
        if (dt == R(0)) return -std::numeric_limits<R>::infinity();
        return R(2 * log_scale + log(abs(dt)));
    }
    // |realized - accumulated| log determinant: the renormalization
    // bookkeeping check
    R det_defect() const {
        using std::abs;
        require(!singular_factor, Err::NumericFailure,
                "determinant check undefined after a singular factor");
        return abs(R(det_log() - det_log_acc));
    }
    int det_sign() const { return m.det() > 0 ? 1 : m.det() < 0 ? -1 : 0; }
};

// ------------------------------------------------------------ matrix function

struct MatrixFunction {
    std::string name;
    std::array<PeriodicFunction, 4> entry;  // row-major ((0, 1), (2, 3))
    bool bounded = true;                    // every entry has a finite sup
    bool bounded_variation = true;          // every entry is BV on the circle
    std::vector<Rat> singular_points;       // union over entries

    Mat2<double> at(double x) const {
        return {eval(entry[0], x), eval(entry[1], x), eval(entry[2], x), eval(entry[3], x)};
    }
    Mat2<BigReal> at_big(const BigReal& x) const {
        return {eval(entry[0], x), eval(entry[1], x), eval(entry[2], x), eval(entry[3], x)};
    }
};

// assemble from explicit entries, measuring the boundedness and variation
// flags; intended for small hand-built examples, the named constructors
// below set the flags structurally instead
inline MatrixFunction matrix_function(const std::string& name, const PeriodicFunction& e00,
                                      const PeriodicFunction& e01, const PeriodicFunction& e10,
                                      const PeriodicFunction& e11) {
    MatrixFunction M;
    M.name = name;
    M.entry = {e00, e01, e10, e11};
    for (const auto& e : M.entry) {
        M.bounded = M.bounded && e.bounded;
        M.bounded_variation = M.bounded_variation && !total_variation(e).infinite;
        for (const auto& s : e.singular_points) M.singular_points.push_back(s);
    }
    std::sort(M.singular_points.begin(), M.singular_points.end());
    M.singular_points.erase(std::unique(M.singular_points.begin(), M.singular_points.end()),
                            M.singular_points.end());
    return M;
}

// Schrodinger cocycle ((E - f, -1), (1, 0)); the energy is baked in
inline MatrixFunction schrodinger(const PeriodicFunction& f, const Rat& E) {
    double Ed = to_double(E);
    BigReal Eb = to_big(E);

    PeriodicFunction e00;
    e00.name = "energy_minus(" + f.name + ")";
    e00.fd = [h = f.fd, Ed](double x) {
        double t = h(x);
        return std::isinf(t) ? -t : Ed - t;
    };
    e00.fb = [h = f.fb, Eb](const BigReal& x) {
        BigReal t = h(x);
        if (!detail::finite_val(t)) return BigReal(-t);
        return BigReal(Eb - t);
    };
    if (f.fq) e00.fq = [h = f.fq, E](const Rat& x) { return Rat(E - h(x)); };
    e00.singular_points = f.singular_points;
    e00.bounded = f.bounded;
    if (f.bounded) e00.sup_abs = std::abs(Ed) + f.sup_abs;

    MatrixFunction M;
    M.name = "schrodinger(" + f.name + "; E=" + fmt17(Ed) + ")";
    M.entry = {e00, pf_const(Rat(-1)), pf_const(Rat(1)), pf_const(Rat(0))};
    M.bounded = f.bounded;
    M.bounded_variation = f.bounded && !total_variation(f).infinite;
    M.singular_points = f.singular_points;
    return M;
}

// S = F * G with F = 1 + |f| scalar (energy independent) and G bounded even
// when f is not: the G entries extend to the poles of f by their one-sided
// limits ((E - f)/(1 + |f|) -> -sgn(f), the off-diagonal ratios -> 0)
struct Factorization {
    PeriodicFunction F;
    std::function<MatrixFunction(const Rat&)> G;
};

inline Factorization factorize(const PeriodicFunction& f) {
    Factorization out;
    out.F = one_plus_abs(f);
    out.G = [f](const Rat& E) {
        double Ed = to_double(E);
        BigReal Eb = to_big(E);

        PeriodicFunction g00;
        g00.name = "G00(" + f.name + ")";
        g00.fd = [h = f.fd, Ed](double x) {
            double t = h(x);
            if (std::isinf(t)) return t > 0 ? -1.0 : 1.0;
            return (Ed - t) / (1.0 + std::abs(t));
        };
        g00.fb = [h = f.fb, Eb](const BigReal& x) {
            BigReal t = h(x);
            if (!detail::finite_val(t)) return BigReal(t > 0 ? -1 : 1);
            return BigReal((Eb - t) / (1 + abs(t)));
        };
        if (f.fq)
            g00.fq = [h = f.fq, E](const Rat& x) {
                Rat t = h(x);
                return Rat((E - t) / (1 + rat_abs(t)));
            };
        g00.sup_abs = std::max(std::abs(Ed), 1.0);

        PeriodicFunction g01;
        g01.name = "G01(" + f.name + ")";
        g01.fd = [h = f.fd](double x) {
            double t = h(x);
            return std::isinf(t) ? 0.0 : -1.0 / (1.0 + std::abs(t));
        };
        g01.fb = [h = f.fb](const BigReal& x) {
            BigReal t = h(x);
            if (!detail::finite_val(t)) return BigReal(0);
            return BigReal(-1 / (1 + abs(t)));
        };
        if (f.fq)
            g01.fq = [h = f.fq](const Rat& x) { return Rat(Rat(-1) / (1 + rat_abs(h(x)))); };
        g01.sup_abs = 1.0;

        PeriodicFunction g10;
        g10.name = "G10(" + f.name + ")";
        g10.fd = [h = f.fd](double x) {
            double t = h(x);
            return std::isinf(t) ? 0.0 : 1.0 / (1.0 + std::abs(t));
        };
        g10.fb = [h = f.fb](const BigReal& x) {
            BigReal t = h(x);
            if (!detail::finite_val(t)) return BigReal(0);
            return BigReal(1 / (1 + abs(t)));
        };
        if (f.fq)
            g10.fq = [h = f.fq](const Rat& x) { return Rat(Rat(1) / (1 + rat_abs(h(x)))); };
        g10.sup_abs = 1.0;

        MatrixFunction M;
        M.name = "G(" + f.name + "; E=" + fmt17(Ed) + ")";
        M.entry = {g00, g01, g10, pf_const(Rat(0))};
        M.bounded = true;
        // the ratio entries inherit finite variation from the semivariation
        // of f; the refinement oracle in total_variation_refined is the
        // empirical check for that claim
        M.bounded_variation = true;
        return M;
    };
    return out;
}

// ---------------------------------------------------------------- walking

namespace detail {

// exact rational orbit pointer: phase = num/den stepped by alpha without
// per-step gcds, with a cheap double view (mpq_get_d ignores canonicality)
struct PhaseWalker {
    Int num, den, step;
    mutable Rat scratch;

    PhaseWalker(const Rat& x0, const Rat& alpha) {
        Int dx = x0.get_den(), da = alpha.get_den();
        Int g = gcd(dx, da);
        den = dx / g * da;
        num = x0.get_num() * (den / dx);
        step = alpha.get_num() * (den / da);
        num %= den;
        if (num < 0) num += den;
        scratch = Rat(0);
        mpz_set(mpq_denref(scratch.get_mpq_t()), den.get_mpz_t());
    }
    void advance() {
        num += step;
        if (num >= den) num -= den;
    }
    double value_d() const {
        mpz_set(mpq_numref(scratch.get_mpq_t()), num.get_mpz_t());
        return mpq_get_d(scratch.get_mpq_t());
    }
    Rat value_q() const { return ratio(num, den); }
};

inline void guard_phase(const MatrixFunction& M, const PhaseWalker& w, const Rat& guard, long k) {
    Rat p = w.value_q();
    for (const auto& s : M.singular_points) {
        Rat dist = rat_abs(Rat(p - mod1(s)));
        if (dist > Rat(1, 2)) dist = Rat(1 - dist);
        require(dist >= guard, Err::SingularPhase,
                "phase within guard radius of a singular point at step " + std::to_string(k));
    }
}

template <class R>
Mat2<R> eval_step(const MatrixFunction& M, const PhaseWalker& w) {
    if constexpr (std::is_same_v<R, double>) {
        return M.at(w.value_d());
    } else {
        return M.at_big(to_big(w.value_q()));
    }
}

// shared product walk; on_step(k, sp) fires after absorbing the k-th factor
// (k = 1..n), which is where snapshot consumers hook in
template <class R, class F>
ScaledProduct<R> walk(const MatrixFunction& M, const Rat& x0, const Rat& alpha, long n,
                      const Rat& guard, F&& on_step) {
    require(n >= 0, Err::BadConfig, "product length must be nonnegative");
    ScaledProduct<R> sp;
    PhaseWalker w(mod1(x0), mod1(alpha));
    bool guarded = !M.singular_points.empty();
    for (long k = 0; k < n; ++k) {
        if (guarded) guard_phase(M, w, guard, k);
        sp.absorb(eval_step<R>(M, w));
        w.advance();
        on_step(k + 1, sp);
    }
    return sp;
}

}  // namespace detail

inline constexpr long kDefaultGuardDen = 1000000000L;

// M_n(x) = M(x + (n-1)a) ... M(x + a) M(x), phases exact rationals over the
// continued fraction stand-in; refuses phases within the guard radius of a
// singular entry point, reporting the offending step
template <class R = double>
ScaledProduct<R> product(const MatrixFunction& M, const Rat& x0, const ContinuedFraction& cf,
                         long n, const Rat& guard = Rat(1, kDefaultGuardDen)) {
    return detail::walk<R>(M, x0, cf.value(), n, guard, [](long, const ScaledProduct<R>&) {});
}

// ------------------------------------------------------------ Lyapunov scan

struct LyapunovEstimate {
    long n = 0;
    int phases = 0;
    double value = 0.0;  // mean over phases of (1/n) log ||M_n||
    std::vector<std::pair<long, double>> monotone_chain;  // (m, mean g_m) at n/4, n/2, n
    std::vector<double> per_phase;                        // g_n per phase
    double chain_drop = 0.0;  // largest increase along the chain (subadditivity defect)
    long det_window = 0;      // prefix length where 53-bit dets still resolve
    double det_defect = 0.0;  // worst renormalization defect at that window
};

inline LyapunovEstimate lyapunov(const MatrixFunction& M, const ContinuedFraction& cf, long n,
                                 const PointSet& phases, const Rat& guard = Rat(1, kDefaultGuardDen)) {
    require(n >= 4, Err::BadConfig, "lyapunov estimate needs n >= 4");
    require(!phases.points.empty(), Err::EmptySet, "lyapunov estimate needs phases");

    std::vector<long> marks = {n / 4, n / 2, n};
    marks.erase(std::unique(marks.begin(), marks.end()), marks.end());

    LyapunovEstimate est;
    est.n = n;
    est.phases = int(phases.points.size());
    est.det_window = std::min(n, 4L);
    std::vector<double> sums(marks.size(), 0.0);
    Rat alpha = cf.value();
    for (const auto& p : phases.points) {
        std::size_t mi = 0;
        std::vector<double> logs(marks.size(), 0.0);
        detail::walk<double>(M, p.value, alpha, n, guard,
                             [&](long k, const ScaledProduct<double>& s) {
                                 if (k == est.det_window)
                                     est.det_defect = std::max(est.det_defect, s.det_defect());
                                 while (mi < marks.size() && marks[mi] == k) {
                                     logs[mi] = s.norm_log();
                                     ++mi;
                                 }
                             });
        for (std::size_t i = 0; i < marks.size(); ++i) sums[i] += logs[i] / double(marks[i]);
        est.per_phase.push_back(logs.back() / double(n));
    }
    for (std::size_t i = 0; i < marks.size(); ++i)
        est.monotone_chain.emplace_back(marks[i], sums[i] / double(est.phases));
    est.value = est.monotone_chain.back().second;
    for (std::size_t i = 1; i < est.monotone_chain.size(); ++i)
        est.chain_drop = std::max(
            est.chain_drop, est.monotone_chain[i].second - est.monotone_chain[i - 1].second);
    return est;
}

// ----------------------------------------------------- uniform upper bound

// the constants the block-decomposition proof asks for, measured at desk
// scale: C1 bounds every (1/m) log ||M_m|| by submultiplicativity from m = 1,
// the block length m0 and truncation level A absorb one epsilon/4 each, and
// k0 makes the Koksma transfer over the stride-m0 orbit absorb the third
struct UniformLedger {
    double epsilon = 0.0;
    double L_hat = 0.0;  // deepest grid mean along the doubling chain
    double C1 = 0.0;     // grid sup of the one-step term
    long m0 = 0;
    double mean_m0 = 0.0;
    double A = 0.0;
    double truncation_deficit = 0.0;  // mean g_m0 - mean [g_m0]_A
    double C2 = 0.0;                  // refinement estimate of Var [g_m0]_A
    long k0 = 0;
    Rat Dk_bound;  // 2 D*_k0 of the stride-m0 orbit (translation-safe factor 2)
    long n0 = 0;   // m0 * max(k0, ceil(4 C1 / epsilon))
    bool satisfied = false;
    std::string obstruction;  // first unmet ledger line when !satisfied
};

struct UniformMarginRow {
    long n = 0;
    double mean_g = 0.0;
    double max_g = 0.0;
    double margin = 0.0;  // max_g - L_hat
};

struct UniformBoundReport {
    UniformLedger ledger;
    long n = 0;  // deepest tested scale
    double L_hat = 0.0;
    double max_g = 0.0;
    double margin = 0.0;
    std::vector<UniformMarginRow> chain;  // doubling scales up to n
    std::vector<double> profile;          // per-grid-phase value at the deepest scale
    long achieved_at = 0;                 // smallest scale with margin <= epsilon
    bool within_epsilon = false;
};

struct UniformOptions {
    double epsilon = 0.1;
    long m0 = 0;    // 0: search powers of two for the first eps/4 mean gap
    double A = 0.0; // 0: double from 2 max(C1, 1) until the deficit fits
    long m0_cap = 1 << 10;
    long k_cap_steps = 1 << 22;  // cap on k0 * m0 in the discrepancy search
    long var_points = 1 << 12;   // refinement depth for C2
};

// raw scalar cocycle g_m(x) (unnormalized); subadditive drivers divide by m
using ScalarCocycle = std::function<double(long, const Rat&)>;

inline UniformBoundReport subadditive_uniform_margin(const ScalarCocycle& g,
                                                     const ContinuedFraction& cf, long n_max,
                                                     const PointSet& x_grid,
                                                     const UniformOptions& opt = {}) {
    require(!x_grid.points.empty(), Err::EmptySet, "uniform bound needs a phase grid");
    require(n_max >= 4, Err::BadConfig, "uniform bound needs n_max >= 4");
    require(opt.epsilon > 0, Err::BadConfig, "epsilon must be positive");

    std::vector<long> scales;
    for (long m = 1; m < n_max; m *= 2) scales.push_back(m);
    scales.push_back(n_max);

    const std::size_t P = x_grid.points.size();
    std::vector<std::vector<double>> vals(scales.size(), std::vector<double>(P));
    for (std::size_t si = 0; si < scales.size(); ++si)
        for (std::size_t pi = 0; pi < P; ++pi)
            vals[si][pi] = g(scales[si], x_grid.points[pi].value) / double(scales[si]);

    UniformBoundReport rep;
    rep.n = scales.back();
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double t : v) s += t;
        return s / double(v.size());
    };
    auto max_of = [](const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); };

    std::vector<double> means(scales.size()), maxs(scales.size());
    for (std::size_t si = 0; si < scales.size(); ++si) {
        means[si] = mean_of(vals[si]);
        maxs[si] = max_of(vals[si]);
    }
    double L_hat = *std::min_element(means.begin(), means.end());

    UniformLedger& led = rep.ledger;
    led.epsilon = opt.epsilon;
    led.L_hat = L_hat;
    led.C1 = maxs[0];
    const double quarter = opt.epsilon / 4.0;

    // block length: first power of two whose grid mean is within eps/4 of L_hat
    std::size_t m0_idx = scales.size();
    if (opt.m0 > 0) {
        for (std::size_t si = 0; si < scales.size(); ++si)
            if (scales[si] == opt.m0) m0_idx = si;
        require(m0_idx < scales.size(), Err::BadConfig,
                "explicit m0 must lie on the doubling chain");
    } else {
        for (std::size_t si = 0; si < scales.size(); ++si)
            if ((scales[si] & (scales[si] - 1)) == 0 && scales[si] <= opt.m0_cap &&
                means[si] - L_hat < quarter) {
                m0_idx = si;
                break;
            }
    }
    bool have_m0 = m0_idx < scales.size();
    if (!have_m0) {
        led.obstruction = "no block length on the chain brings the mean within epsilon/4";
        std::size_t best = 0;
        for (std::size_t si = 0; si < scales.size(); ++si)
            if ((scales[si] & (scales[si] - 1)) == 0 && scales[si] <= opt.m0_cap &&
                means[si] < means[best])
                best = si;
        m0_idx = best;
    }
    led.m0 = scales[m0_idx];
    led.mean_m0 = means[m0_idx];
    if (have_m0 && opt.m0 > 0 && led.mean_m0 - L_hat >= quarter) {
        have_m0 = false;
        led.obstruction = "explicit m0 leaves a mean gap above epsilon/4";
    }

    // truncation level: only the lower clip can act (values sit below C1)
    const std::vector<double>& gm0 = vals[m0_idx];
    auto deficit_at = [&](double A) {
        double s = 0;
        for (double v : gm0) s += v - std::max(std::min(v, A), -A);
        return s / double(P);
    };
    bool have_A = true;
    if (opt.A > 0.0) {
        require(opt.A > led.C1, Err::BadBounds, "truncation level must exceed the one-step sup");
        led.A = opt.A;
        led.truncation_deficit = deficit_at(led.A);
        if (led.truncation_deficit > quarter) {
            have_A = false;
            if (led.obstruction.empty())
                led.obstruction = "explicit truncation level leaves a deficit above epsilon/4";
        }
    } else {
        led.A = 2.0 * std::max(led.C1, 1.0);
        int rounds = 0;
        while ((led.truncation_deficit = deficit_at(led.A)) > quarter && rounds++ < 60) led.A *= 2;
        if (led.truncation_deficit > quarter) {
            have_A = false;
            if (led.obstruction.empty())
                led.obstruction = "truncation deficit did not fall below epsilon/4";
        }
    }

    // variation of the truncated block average, by dyadic refinement
    {
        PeriodicFunction gm0_pf;
        gm0_pf.name = "block_average";
        double A = led.A;
        long m0 = led.m0;
        gm0_pf.fd = [&g, m0, A](double x) {
            double v = g(m0, rat_of(x)) / double(m0);
            return std::max(std::min(v, A), -A);
        };
        gm0_pf.fb = nullptr;
        led.C2 = total_variation_refined(gm0_pf, opt.var_points).value;
    }

    // block count: stride-m0 orbit discrepancy small enough that the Koksma
    // transfer C2 * D_k eats the last eps/4; the factor 2 covers translated
    // base points (D* of a shifted set is at most the full discrepancy)
    bool have_k0 = false;
    try {
        for (long k = 1; k * led.m0 <= opt.k_cap_steps; k *= 2) {
            auto orbit = rotation_orbit(Rat(0), cf, k, led.m0, Rat(1));
            Rat dk = Rat(2 * star_discrepancy(orbit));
            if (led.C2 * to_double(dk) < quarter) {
                led.k0 = k;
                led.Dk_bound = dk;
                have_k0 = true;
                break;
            }
        }
        if (!have_k0 && led.obstruction.empty())
            led.obstruction = "orbit discrepancy target unreachable under the step cap";
    } catch (const Error&) {
        if (led.obstruction.empty())
            led.obstruction = "continued fraction stand-in too shallow for the block count";
    }

    long remainder_floor = led.C1 > 0 ? long(std::ceil(4.0 * led.C1 / opt.epsilon)) : 1L;
    led.n0 = led.m0 * std::max(have_k0 ? led.k0 : 1L, remainder_floor);
    led.satisfied = have_m0 && have_A && have_k0;

    rep.L_hat = L_hat;
    for (std::size_t si = 0; si < scales.size(); ++si) {
        UniformMarginRow row;
        row.n = scales[si];
        row.mean_g = means[si];
        row.max_g = maxs[si];
        row.margin = maxs[si] - L_hat;
        rep.chain.push_back(row);
        if (rep.achieved_at == 0 && row.margin <= opt.epsilon) rep.achieved_at = row.n;
    }
    rep.max_g = maxs.back();
    rep.margin = rep.chain.back().margin;
    rep.profile = vals.back();
    rep.within_epsilon = rep.achieved_at != 0;
    return rep;
}

inline UniformBoundReport uniform_upper_margin(const MatrixFunction& M,
                                               const ContinuedFraction& cf, long n_max,
                                               const PointSet& x_grid,
                                               const UniformOptions& opt = {}) {
    require(M.bounded && M.bounded_variation, Err::UnboundedEntries,
            "cocycle entries unbounded or of infinite variation: factorize first");
    Rat alpha = cf.value();
    ScalarCocycle g = [&M, alpha](long m, const Rat& x) {
        auto sp = detail::walk<double>(M, x, alpha, m, Rat(1, kDefaultGuardDen),
                                       [](long, const ScaledProduct<double>&) {});
        return sp.norm_log();
    };
    return subadditive_uniform_margin(g, cf, n_max, x_grid, opt);
}

}  // namespace qpg
