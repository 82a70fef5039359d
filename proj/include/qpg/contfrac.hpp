#pragma once
// Continued fractions with certified partial quotients.  Frequencies enter
// as exact quadratic surds, validated decimal intervals, explicit quotient
// lists, or synthesized Liouville-type sequences with prescribed upper
// exponential growth of the denominators.

#include "errors.hpp"
#include "numeric.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qpg {

// ---------------------------------------------------------------------------
// exact quadratic irrational (P + sqrt(D)) / Q, D > 0 not a perfect square

struct Surd {
    Int P, D, Q;  // Q != 0

    // sign of (P+sqrt(D))/Q - t, exact
    int cmp(const Rat& t) const {
        // compare sqrt(D) with R = t*Q - P, then undo the sign of Q
        Rat R = t * Rat(Q) - Rat(P);
        int c;
        if (sgn(R) <= 0) {
            c = +1;  // sqrt(D) >= 1 > R
        } else {
            Rat lhs = Rat(D) * R.get_den() * R.get_den();
            Rat rhs = Rat(R.get_num()) * R.get_num();
            c = lhs > rhs ? +1 : -1;  // equality impossible: D not a square
        }
        return mpz_sgn(Q.get_mpz_t()) > 0 ? c : -c;
    }

    Int floor() const {
        Int s;
        mpz_sqrt(s.get_mpz_t(), D.get_mpz_t());
        // value lies strictly between (P+s)/Q and (P+s+1)/Q
        Rat lo = Rat(P + s, Q), hi = Rat(P + s + 1, Q);
        lo.canonicalize();
        hi.canonicalize();
        if (lo > hi) std::swap(lo, hi);
        Int fl = rat_floor(lo), fh = rat_floor(hi);
        if (fl == fh) return fl;
        // exactly one integer candidate fh in (lo,hi]; one exact comparison settles it
        return cmp(Rat(fh)) >= 0 ? fh : fl;
    }

    double approx() const {
        return (to_double(Rat(P)) + std::sqrt(to_double(Rat(D)))) / to_double(Rat(Q));
    }
};

// build (A + B*sqrt(N))/C as a Surd; returns nullopt when the value is rational
inline std::optional<Surd> make_surd(Int A, Int B, const Int& N, Int C) {
    require(sgn(Rat(C)) != 0, Err::BadConfig, "surd denominator is zero");
    require(mpz_sgn(N.get_mpz_t()) > 0, Err::BadConfig, "surd radicand must be positive");
    if (mpz_perfect_square_p(N.get_mpz_t()) || B == 0) return std::nullopt;
    if (B < 0) { A = -A; B = -B; C = -C; }
    Surd s{A, B * B * N, C};
    // keep the classical invariant Q | D - P^2 so the quotient recursion stays integral
    if ((s.D - s.P * s.P) % s.Q != 0) {
        Int aq = abs(s.Q);
        s.P *= aq;
        s.D *= aq * aq;
        s.Q *= aq;
    }
    return s;
}

// ---------------------------------------------------------------------------

struct ContinuedFraction {
    // a[i] is the partial quotient a_{i+1}; a_0 = 0 (values normalized to (0,1))
    std::vector<Int> a;
    // convergents p[k]/q[k], k = 0..depth(): p0/q0 = 0/1, p1/q1 = 1/a1
    std::vector<Int> p, q;
    bool rational_terminated = false;
    std::string source;

    int depth() const { return int(a.size()); }

    void push(const Int& ak) {
        require(ak >= 1, Err::BadConfig, "partial quotients must be >= 1");
        if (p.empty()) { p = {0}; q = {1}; }
        a.push_back(ak);
        if (a.size() == 1) {
            p.push_back(1);
            q.push_back(ak);
        } else {
            p.push_back(ak * p[p.size() - 1] + p[p.size() - 2]);
            q.push_back(ak * q[q.size() - 1] + q[q.size() - 2]);
        }
    }

    const Int& P(int k) const { return p.at(size_t(k)); }
    const Int& Q(int k) const { return q.at(size_t(k)); }

    Rat convergent(int k) const { return Rat(P(k), Q(k)); }  // already coprime, q > 0

    // deepest convergent; the rational stand-in every orbit computation uses
    Rat value() const {
        require(depth() >= 1, Err::InsufficientDepth, "empty continued fraction");
        return convergent(depth());
    }

    // |alpha - value()|: zero for terminated rationals, else the mediant bound
    Rat value_error() const {
        require(depth() >= 1, Err::InsufficientDepth, "empty continued fraction");
        if (rational_terminated) return Rat(0);
        int K = depth();
        return Rat(1, Q(K) * (Q(K) + Q(K - 1)));
    }

    // open enclosure of alpha between the deepest convergent and its mediant
    void enclosure(Rat& lo, Rat& hi) const {
        int K = depth();
        if (rational_terminated) { lo = hi = value(); return; }
        Rat c = convergent(K);
        Rat m(P(K) + P(K - 1), Q(K) + Q(K - 1));
        lo = std::min(c, m);
        hi = std::max(c, m);
    }
};

inline ContinuedFraction from_quotients(const std::vector<Int>& quot, std::string src = "cf") {
    require(!quot.empty(), Err::BadConfig, "empty quotient list");
    ContinuedFraction cf;
    cf.source = std::move(src);
    for (const Int& ak : quot) cf.push(ak);
    return cf;
}

// ---------------------------------------------------------------------------
// expansions

inline ContinuedFraction expand_surd(const Int& A, const Int& B, const Int& N,
                                     const Int& C, int depth) {
    require(depth >= 1, Err::BadConfig, "depth must be >= 1");
    auto s0 = make_surd(A, B, N, C);
    if (!s0) {
        // rational value: fold sqrt(N) into the numerator and expand exactly
        Int r;
        mpz_sqrt(r.get_mpz_t(), N.get_mpz_t());
        Rat v(A + B * r, C);
        v.canonicalize();
        v = mod1(v);
        require(sgn(v) != 0, Err::BadConfig, "frequency reduces to an integer");
        ContinuedFraction cf;
        cf.source = "surd(rational)";
        cf.rational_terminated = true;
        Int n = v.get_num(), d = v.get_den();
        while (n != 0 && cf.depth() < depth) {  // Euclid on 1/x
            Int ak = d / n, rem = d % n;
            cf.push(ak);
            d = n;
            n = rem;
        }
        return cf;
    }
    Surd s = *s0;
    ContinuedFraction cf;
    cf.source = "surd";
    Int a0 = s.floor();  // strip the integer part; frequencies live in (0,1)
    s.P -= a0 * s.Q;
    for (int i = 0; i < depth; ++i) {
        // x -> 1/frac(x): with x = (P+sqrt(D))/Q in (0,1), 1/x = (P'+sqrt(D))/Q'
        Int Pn = -s.P;
        Int Qn = (s.D - Pn * Pn) / s.Q;
        s.P = Pn;
        s.Q = Qn;
        Int ak = s.floor();
        cf.push(ak);
        s.P -= ak * s.Q;
    }
    return cf;
}

// certified common prefix of every value in [lo, hi] (subset of (0,1));
// strict = throw PrecisionExhausted if fewer than max_depth quotients certify
inline ContinuedFraction expand_interval(Rat lo, Rat hi, int max_depth, bool strict = true) {
    require(lo <= hi, Err::BadBounds, "interval is empty");
    Int f = rat_floor(lo);
    require(f == rat_floor(hi), Err::PrecisionExhausted,
            "interval straddles an integer; no quotient certifiable");
    lo -= Rat(f);
    hi -= Rat(f);
    ContinuedFraction cf;
    cf.source = "interval";
    while (cf.depth() < max_depth) {
        if (lo == hi) {
            if (sgn(lo) == 0) { cf.rational_terminated = true; break; }
            Int n = lo.get_num(), d = lo.get_den();
            while (n != 0 && cf.depth() < max_depth) {
                cf.push(d / n);
                Int rem = d % n;
                d = n;
                n = rem;
            }
            cf.rational_terminated = (cf.depth() < max_depth) ||
                                     (cf.depth() == max_depth && n == 0);
            break;
        }
        if (sgn(lo) <= 0) break;  // 0 inside the interval: quotient uncertifiable
        // x in [lo,hi] => 1/x in [1/hi, 1/lo]
        Rat rlo = Rat(1) / hi, rhi = Rat(1) / lo;
        Int alo = rat_floor(rlo), ahi = rat_floor(rhi);
        if (alo != ahi) break;
        if (alo < 1) break;
        cf.push(alo);
        lo = rlo - Rat(alo);
        hi = rhi - Rat(alo);
    }
    if (strict && !cf.rational_terminated && cf.depth() < max_depth)
        fail(Err::PrecisionExhausted,
             "certified only " + std::to_string(cf.depth()) + " of " +
                 std::to_string(max_depth) + " quotients");
    require(cf.depth() >= 1, Err::PrecisionExhausted, "no quotient certifiable");
    return cf;
}

// decimal literal with implied half-ulp radius, e.g. "0.618033"
inline ContinuedFraction expand_decimal(const std::string& digits, int max_depth,
                                        bool strict = true) {
    size_t dot = digits.find('.');
    std::string intpart = dot == std::string::npos ? digits : digits.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : digits.substr(dot + 1);
    for (char c : intpart + frac)
        require(c >= '0' && c <= '9', Err::BadConfig, "bad decimal frequency literal");
    Int scale = 1;
    for (size_t i = 0; i < frac.size(); ++i) scale *= 10;
    Int num = Int(intpart.empty() ? "0" : intpart) * scale + Int(frac.empty() ? "0" : frac);
    Rat v(num, scale);
    v.canonicalize();
    Rat r(1, 2 * scale);
    auto cf = expand_interval(v - r, v + r, max_depth, strict);
    cf.source = "dec:" + digits;
    return cf;
}

// ---------------------------------------------------------------------------
// synthesized Liouville-type frequency: a_{k+1} = ceil(e^{beta q_k} / q_k),
// which pins log(q_{k+1})/q_k into [beta, beta + 2/q_k]

struct Synthesis {
    ContinuedFraction cf;
    double beta = 0;
    int depth_requested = 0;
    bool budget_hit = false;
    long digits_last = 0;  // decimal digits of the largest quotient
};

namespace detail {
// ceil(e^t / q) certified by outward mpfr rounding at increasing precision;
// t must be exact (rational): a double argument only carries e^t to ~1e-12
// relative and could never pin a thousand-digit integer
inline Int ceil_exp_over(const Rat& t, const Int& q) {
    double td = to_double(t);
    require(std::isfinite(td), Err::PrecisionExhausted, "exponent out of range");
    mpfr_prec_t prec = mpfr_prec_t(td / 0.693147 + 96);
    for (;;) {
        require(prec < (1L << 26), Err::PrecisionExhausted, "quotient ceil did not certify");
        mpfr_t lo, hi;
        mpfr_init2(lo, prec);
        mpfr_init2(hi, prec);
        mpfr_set_q(lo, t.get_mpq_t(), MPFR_RNDD);
        mpfr_set_q(hi, t.get_mpq_t(), MPFR_RNDU);
        mpfr_exp(lo, lo, MPFR_RNDD);
        mpfr_exp(hi, hi, MPFR_RNDU);
        mpfr_div_z(lo, lo, q.get_mpz_t(), MPFR_RNDD);
        mpfr_div_z(hi, hi, q.get_mpz_t(), MPFR_RNDU);
        Int clo, chi;
        mpfr_get_z(clo.get_mpz_t(), lo, MPFR_RNDU);
        mpfr_get_z(chi.get_mpz_t(), hi, MPFR_RNDU);
        mpfr_clear(lo);
        mpfr_clear(hi);
        if (clo == chi) return clo;
        prec *= 2;
    }
}
}  // namespace detail

inline Synthesis synthesize_liouville(double beta, int depth, long digit_budget,
                                      long a1 = 3, long a2_min = 0) {
    require(beta >= 0, Err::BadConfig, "beta must be nonnegative");
    require(depth >= 1 && a1 >= 1 && digit_budget >= 1, Err::BadConfig,
            "bad synthesis parameters");
    Synthesis out;
    out.beta = beta;
    out.depth_requested = depth;
    out.cf.source = "liouville";
    if (beta == 0) {
        // degenerate request: fall back to bounded quotients (golden tail)
        out.cf.push(a1);
        while (out.cf.depth() < depth) out.cf.push(1);
        out.cf.source += "(beta=0,golden-tail)";
        return out;
    }
    out.cf.push(a1);
    while (out.cf.depth() < depth) {
        const Int& qk = out.cf.Q(out.cf.depth());
        double lq = log_mpz(qk);
        Rat t = rat_of(beta) * Rat(qk);  // exact: beta is dyadic
        // decimal digits of the next quotient; inf-safe comparison
        double digits = (to_double(t) - lq) / 2.302585092994046 + 1;
        if (!(digits <= double(digit_budget))) { out.budget_hit = true; break; }
        Int ak = detail::ceil_exp_over(t, qk);
        // a2_min widens the second quotient only; growth already at or past
        // the requested rate is never slowed down
        if (out.cf.depth() == 1 && ak < a2_min) ak = a2_min;
        out.digits_last = long(mpz_sizeinbase(ak.get_mpz_t(), 10));
        out.cf.push(ak);
    }
    return out;
}

// ---------------------------------------------------------------------------
// derived quantities

struct BetaEstimate {
    double beta_hat = 0;
    int k_min = 2;
    int k_arg = 0;
    std::vector<double> per_k;  // per_k[i] = log(q_{i+2})/q_{i+1}, i.e. k = i+1
};

inline BetaEstimate beta_estimate(const ContinuedFraction& cf, int k_min = 2) {
    require(cf.depth() >= k_min + 1, Err::InsufficientDepth,
            "beta estimate needs at least k_min+1 quotients");
    BetaEstimate be;
    be.k_min = k_min;
    for (int k = 1; k + 1 <= cf.depth(); ++k) {
        double lq_next = log_mpz(cf.Q(k + 1));
        double dq = to_double(Rat(cf.Q(k)));
        double v = std::isfinite(dq) && dq > 0 ? lq_next / dq
                                               : lq_next * std::exp(-log_mpz(cf.Q(k)));
        be.per_k.push_back(v);
        if (k >= k_min && (be.k_arg == 0 || v > be.beta_hat)) {
            be.beta_hat = v;
            be.k_arg = k;
        }
    }
    return be;
}

// point on the circle with a certified error radius
struct CirclePoint {
    Rat value;  // in [0,1)
    Rat err;    // |true point - value| <= err < 1/4
};

inline CirclePoint phase(const Rat& x0, const ContinuedFraction& cf, const Int& n,
                         const Rat& tol) {
    Rat err = rat_abs(Rat(n)) * cf.value_error();
    require(err <= tol, Err::DepthInsufficient,
            "phase error bound exceeds tolerance; expand the frequency deeper");
    require(err < Rat(1, 4), Err::DepthInsufficient, "phase error bound >= 1/4");
    return CirclePoint{mod1(x0 + Rat(n) * cf.value()), err};
}

// enclosure, sign, and stand-in value of ||q_k alpha||
struct DistanceToInt {
    Rat lo, hi;  // 1/(q_{k+1}+q_k) <= ||q_k alpha|| <= 1/q_{k+1}
    int sign;    // sign of q_k alpha - p_k, which is (-1)^k
    Rat point;   // |q_k * standin - p_k|, exact for the stand-in
};

inline DistanceToInt nearest_integer_distance(const ContinuedFraction& cf, int k) {
    require(k >= 1 && k + 1 <= cf.depth(), Err::InsufficientDepth,
            "nearest-integer distance at k needs depth >= k+1");
    DistanceToInt d;
    d.lo = Rat(1, cf.Q(k + 1) + cf.Q(k));
    d.hi = Rat(1, cf.Q(k + 1));
    d.sign = (k % 2 == 0) ? +1 : -1;
    d.point = rat_abs(Rat(cf.Q(k)) * cf.value() - Rat(cf.P(k)));
    return d;
}

// ---------------------------------------------------------------------------
// frequency grammar:
//   dec:<digits>                          validated decimal interval
//   surd:(a+b*sqrt(d))/c                  exact quadratic irrational
//   cf:[a1,a2,...]                        explicit quotients
//   liouville:beta=<x>,depth=<k>,budget=<digits>[,a1=<n>]

namespace detail {
inline long parse_long(const std::string& s, const char* what) {
    try {
        size_t pos = 0;
        long v = std::stol(s, &pos);
        require(pos == s.size(), Err::BadConfig, std::string("trailing junk in ") + what);
        return v;
    } catch (const Error&) {
        throw;
    } catch (...) {
        fail(Err::BadConfig, std::string("cannot parse ") + what + ": " + s);
    }
}
}  // namespace detail

inline ContinuedFraction parse_frequency(const std::string& spec, int depth = 40) {
    auto starts = [&](const char* pfx) {
        return spec.rfind(pfx, 0) == 0;
    };
    if (starts("dec:")) return expand_decimal(spec.substr(4), depth, true);
    if (starts("surd:")) {
        // (a+b*sqrt(d))/c  with integer a,b,d,c; b and c may be negative
        long a, b, d, c;
        if (std::sscanf(spec.c_str(), "surd:(%ld+%ld*sqrt(%ld))/%ld", &a, &b, &d, &c) != 4 &&
            std::sscanf(spec.c_str(), "surd:(%ld%ld*sqrt(%ld))/%ld", &a, &b, &d, &c) != 4)
            fail(Err::BadConfig, "bad surd spec: " + spec);
        auto cf = expand_surd(Int(a), Int(b), Int(d), Int(c), depth);
        cf.source = spec;
        return cf;
    }
    if (starts("cf:")) {
        std::string body = spec.substr(3);
        require(body.size() >= 2 && body.front() == '[' && body.back() == ']',
                Err::BadConfig, "cf spec wants [a1,a2,...]");
        body = body.substr(1, body.size() - 2);
        std::vector<Int> quot;
        size_t pos = 0;
        while (pos < body.size()) {
            size_t comma = body.find(',', pos);
            std::string tok = body.substr(pos, comma == std::string::npos ? std::string::npos
                                                                          : comma - pos);
            quot.emplace_back(tok);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        return from_quotients(quot, spec);
    }
    if (starts("liouville:")) {
        double beta = -1;
        long ldepth = -1, budget = 10000, a1 = 3, a2min = 0;
        std::string body = spec.substr(10);
        size_t pos = 0;
        while (pos < body.size()) {
            size_t comma = body.find(',', pos);
            std::string tok = body.substr(pos, comma == std::string::npos ? std::string::npos
                                                                          : comma - pos);
            size_t eq = tok.find('=');
            require(eq != std::string::npos, Err::BadConfig, "liouville spec wants key=value");
            std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "beta") beta = std::stod(val);
            else if (key == "depth") ldepth = detail::parse_long(val, "depth");
            else if (key == "budget") budget = detail::parse_long(val, "budget");
            else if (key == "a1") a1 = detail::parse_long(val, "a1");
            else if (key == "a2min") a2min = detail::parse_long(val, "a2min");
            else fail(Err::BadConfig, "unknown liouville key: " + key);
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        require(beta >= 0 && ldepth >= 1, Err::BadConfig,
                "liouville spec needs beta>=0 and depth>=1");
        auto syn = synthesize_liouville(beta, int(ldepth), budget, a1, a2min);
        syn.cf.source = spec + (syn.budget_hit ? " (budget hit)" : "");
        return syn.cf;
    }
    fail(Err::BadConfig, "unknown frequency spec: " + spec);
}

}  // namespace qpg
