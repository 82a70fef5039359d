#pragma once
// 1-periodic extended-real functions and their variation calculus:
// clamping, total and semi-bounded variation, log-envelope, bounded
// factor, mean of log(1+|f|), and finite-difference exceedance bounds.
//
// Monotone-piece metadata carries exact rational endpoint values wherever
// the value is rational (clamp bounds, zeros, step levels), so variation
// sums can stay in exact arithmetic end to end.  Transcendental endpoint
// values are carried as their double images and lifted to rationals when
// they enter a sum; increments mixing the two lift both sides through the
// double image so that the clamp additivity identity stays exact.

#include "errors.hpp"
#include "numeric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qpg {

// extended real, used for clamp bounds
struct XR {
    Rat v;
    int inf = 0;  // -1 / +1 for the two infinities, 0 for finite
    static XR finite(const Rat& r) { return {r, 0}; }
    static XR pos_inf() { return {Rat(0), +1}; }
    static XR neg_inf() { return {Rat(0), -1}; }
    bool operator<(const XR& o) const {
        if (inf != o.inf) return inf < o.inf;
        return inf == 0 && v < o.v;
    }
    double as_double() const {
        return inf > 0 ? HUGE_VAL : inf < 0 ? -HUGE_VAL : to_double(v);
    }
    std::string str() const {
        return inf > 0 ? "+inf" : inf < 0 ? "-inf" : v.get_str();
    }
};

// one-sided value of a monotone piece
struct EndVal {
    std::optional<Rat> exact;
    double approx = 0.0;
    int inf = 0;
    static EndVal of(const Rat& r) { return {r, to_double(r), 0}; }
    static EndVal of_d(double v) { return {std::nullopt, v, 0}; }
    static EndVal pos_inf() { return {std::nullopt, HUGE_VAL, +1}; }
    static EndVal neg_inf() { return {std::nullopt, -HUGE_VAL, -1}; }
    bool finite() const { return inf == 0; }
    // value as a rational, through the double image when no exact one exists
    Rat lift() const { return exact ? *exact : rat_of(approx); }
};

struct Piece {
    Rat lo, hi;   // [lo, hi) subinterval of [0, 1)
    int dir;      // +1 nondecreasing, -1 nonincreasing, 0 constant
    EndVal left;  // value at lo
    EndVal right; // limit as x -> hi from the left
};

struct PeriodicFunction {
    std::string name;
    std::function<double(double)> fd;                  // expects x in [0,1)
    std::function<BigReal(const BigReal&)> fb;         // expects x in [0,1)
    std::function<Rat(const Rat&)> fq;                 // exact path, may be null
    std::vector<Piece> pieces;                         // empty: black box
    std::vector<Rat> zeros;            // sign crossings interior to pieces
    std::vector<Rat> singular_points;  // -inf values or infinite one-sided limits
    bool bounded = true;
    bool monotone_nondecreasing = false;  // on [0,1), wrap jump not counted
    double sup_abs = 0.0;                 // meaningful when bounded
};

inline double eval(const PeriodicFunction& f, double x) {
    x -= std::floor(x);
    if (x >= 1.0 || x < 0.0) x = 0.0;
    return f.fd(x);
}

inline BigReal eval(const PeriodicFunction& f, const BigReal& x) {
    BigReal y = x - floor(x);
    if (y >= 1 || y < 0) y = 0;
    return f.fb(y);
}

inline std::optional<Rat> eval_exact(const PeriodicFunction& f, const Rat& x) {
    if (!f.fq) return std::nullopt;
    return f.fq(mod1(x));
}

// ---------------------------------------------------------------- built-ins

inline PeriodicFunction pf_const(const Rat& c) {
    PeriodicFunction f;
    f.name = "const:" + c.get_str();
    double cd = to_double(c);
    Rat cc = c;
    f.fd = [cd](double) { return cd; };
    f.fb = [cc](const BigReal&) { return to_big(cc); };
    f.fq = [cc](const Rat&) { return cc; };
    f.pieces = {{Rat(0), Rat(1), 0, EndVal::of(c), EndVal::of(c)}};
    f.bounded = true;
    f.sup_abs = std::abs(cd);
    f.monotone_nondecreasing = true;
    return f;
}

inline PeriodicFunction pf_saw() {
    PeriodicFunction f;
    f.name = "saw";
    f.fd = [](double x) { return x; };
    f.fb = [](const BigReal& x) { return x; };
    f.fq = [](const Rat& x) { return x; };
    f.pieces = {{Rat(0), Rat(1), +1, EndVal::of(Rat(0)), EndVal::of(Rat(1))}};
    f.bounded = true;
    f.sup_abs = 1.0;
    f.monotone_nondecreasing = true;
    return f;
}

inline PeriodicFunction pf_cos(const Rat& lambda) {
    PeriodicFunction f;
    f.name = "cos:lambda=" + lambda.get_str();
    double ld = to_double(lambda);
    Rat lam = lambda;
    f.fd = [ld](double x) { return ld * std::cos(2.0 * M_PI * x); };
    f.fb = [lam](const BigReal& x) { return to_big(lam) * cos(2 * big_pi() * x); };
    int s = sgn(lambda);
    f.pieces = {
        {Rat(0), Rat(1, 2), -s, EndVal::of(lambda), EndVal::of(Rat(-lambda))},
        {Rat(1, 2), Rat(1), s, EndVal::of(Rat(-lambda)), EndVal::of(lambda)},
    };
    if (s != 0) f.zeros = {Rat(1, 4), Rat(3, 4)};
    f.bounded = true;
    f.sup_abs = std::abs(ld);
    return f;
}

// lambda*tan(pi x): two increasing branches, value -inf at x=1/2 by the
// one-sided convention (keeps the range inside [-inf, +inf))
inline PeriodicFunction pf_maryland(const Rat& lambda) {
    require(lambda > 0, Err::BadConfig, "maryland: lambda must be > 0");
    PeriodicFunction f;
    f.name = "maryland:lambda=" + lambda.get_str();
    double ld = to_double(lambda);
    Rat lam = lambda;
    f.fd = [ld](double x) {
        if (x == 0.5) return -HUGE_VAL;
        return ld * std::tan(M_PI * x);
    };
    f.fb = [lam](const BigReal& x) {
        if (x == 0.5) return -std::numeric_limits<BigReal>::infinity();
        return BigReal(to_big(lam) * tan(big_pi() * x));
    };
    f.pieces = {
        {Rat(0), Rat(1, 2), +1, EndVal::of(Rat(0)), EndVal::pos_inf()},
        {Rat(1, 2), Rat(1), +1, EndVal::neg_inf(), EndVal::of(Rat(0))},
    };
    f.singular_points = {Rat(1, 2)};
    f.bounded = false;
    return f;
}

// lambda*tan(pi(x-1/2)): one increasing branch over the whole period,
// value -inf attained at x=0
inline PeriodicFunction pf_tanmono(const Rat& lambda) {
    require(lambda > 0, Err::BadConfig, "tanmono: lambda must be > 0");
    PeriodicFunction f;
    f.name = "tanmono:lambda=" + lambda.get_str();
    double ld = to_double(lambda);
    Rat lam = lambda;
    f.fd = [ld](double x) {
        if (x == 0.0) return -HUGE_VAL;
        return ld * std::tan(M_PI * (x - 0.5));
    };
    f.fb = [lam](const BigReal& x) {
        if (x == 0) return -std::numeric_limits<BigReal>::infinity();
        return BigReal(to_big(lam) * tan(big_pi() * (x - BigReal(0.5))));
    };
    f.pieces = {{Rat(0), Rat(1), +1, EndVal::neg_inf(), EndVal::pos_inf()}};
    f.zeros = {Rat(1, 2)};
    f.singular_points = {Rat(0)};
    f.bounded = false;
    f.monotone_nondecreasing = true;
    return f;
}

// piecewise constant: value v_i on [x_i, x_{i+1}), x_0 = 0
inline PeriodicFunction pf_steps(const std::vector<std::pair<Rat, Rat>>& pts) {
    require(!pts.empty() && pts.front().first == 0, Err::BadConfig,
            "steps: first breakpoint must be 0");
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        require(pts[i].first < pts[i + 1].first, Err::BadConfig,
                "steps: breakpoints must increase");
    require(pts.back().first < 1, Err::BadConfig, "steps: breakpoints must lie in [0,1)");

    PeriodicFunction f;
    std::ostringstream nm;
    nm << "steps:[";
    for (std::size_t i = 0; i < pts.size(); ++i)
        nm << (i ? "," : "") << "(" << pts[i].first.get_str() << ","
           << pts[i].second.get_str() << ")";
    nm << "]";
    f.name = nm.str();

    auto pv = pts;
    f.fq = [pv](const Rat& x) {
        std::size_t i = pv.size() - 1;
        while (i > 0 && x < pv[i].first) --i;
        return pv[i].second;
    };
    std::vector<std::pair<double, double>> pd;
    for (auto& p : pv) pd.push_back({to_double(p.first), to_double(p.second)});
    f.fd = [pd](double x) {
        std::size_t i = pd.size() - 1;
        while (i > 0 && x < pd[i].first) --i;
        return pd[i].second;
    };
    f.fb = [pv](const BigReal& x) {
        std::size_t i = pv.size() - 1;
        while (i > 0 && x < to_big(pv[i].first)) --i;
        return to_big(pv[i].second);
    };
    double sup = 0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        Rat hi = (i + 1 < pv.size()) ? pv[i + 1].first : Rat(1);
        f.pieces.push_back({pv[i].first, hi, 0, EndVal::of(pv[i].second),
                            EndVal::of(pv[i].second)});
        sup = std::max(sup, std::abs(to_double(pv[i].second)));
    }
    f.bounded = true;
    f.sup_abs = sup;
    bool mono = true;
    for (std::size_t i = 0; i + 1 < pv.size(); ++i)
        if (pv[i + 1].second < pv[i].second) mono = false;
    f.monotone_nondecreasing = mono;
    return f;
}

// piecewise linear through CSV breakpoints "x,value[,direction]"; a final
// row with x=1 sets the wrap limit, otherwise the last segment closes back
// to the first value
inline PeriodicFunction pf_table(const std::string& path) {
    std::ifstream in(path);
    require(bool(in), Err::BadConfig, "table: cannot open " + path);
    std::vector<std::pair<Rat, Rat>> pts;
    std::optional<Rat> wrap_value;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.find_first_of("0123456789") == std::string::npos) continue;  // header
        std::replace(line.begin(), line.end(), ';', ',');
        std::istringstream row(line);
        std::string xs, vs, ds;
        std::getline(row, xs, ',');
        std::getline(row, vs, ',');
        std::getline(row, ds, ',');
        auto x = parse_rat(xs), v = parse_rat(vs);
        require(x.has_value() && v.has_value(), Err::BadConfig, "table: bad row: " + line);
        if (*x == 1) {
            wrap_value = *v;
            continue;
        }
        require(*x >= 0 && *x < 1, Err::BadConfig, "table: x out of [0,1]");
        if (!ds.empty() && !pts.empty()) {
            auto d = parse_rat(ds);
            require(d.has_value(), Err::BadConfig, "table: bad direction: " + line);
            int want = sgn(Rat(*v - pts.back().second));
            require(sgn(*d) == 0 || sgn(*d) == want, Err::BadConfig,
                    "table: direction column disagrees with values");
        }
        pts.push_back({*x, *v});
    }
    require(pts.size() >= 1 && pts.front().first == 0, Err::BadConfig,
            "table: need breakpoints starting at x=0");
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        require(pts[i].first < pts[i + 1].first, Err::BadConfig,
                "table: x column must increase");
    Rat wrap = wrap_value ? *wrap_value : pts.front().second;

    PeriodicFunction f;
    f.name = "table:" + path;
    auto pv = pts;
    Rat wv = wrap;
    auto interp = [pv, wv](const Rat& x) -> Rat {
        std::size_t i = pv.size() - 1;
        while (i > 0 && x < pv[i].first) --i;
        Rat x0 = pv[i].first, v0 = pv[i].second;
        Rat x1 = (i + 1 < pv.size()) ? pv[i + 1].first : Rat(1);
        Rat v1 = (i + 1 < pv.size()) ? pv[i + 1].second : wv;
        if (x1 == x0) return v0;
        return v0 + (x - x0) * (v1 - v0) / (x1 - x0);
    };
    f.fq = interp;
    std::vector<std::pair<double, double>> pdd;
    for (auto& p : pv) pdd.push_back({to_double(p.first), to_double(p.second)});
    pdd.push_back({1.0, to_double(wrap)});
    f.fd = [pdd](double x) {
        std::size_t i = pdd.size() - 2;
        while (i > 0 && x < pdd[i].first) --i;
        auto [x0, v0] = pdd[i];
        auto [x1, v1] = pdd[i + 1];
        if (x1 == x0) return v0;
        return v0 + (x - x0) * (v1 - v0) / (x1 - x0);
    };
    f.fb = [pv, wv](const BigReal& x) {
        std::size_t i = pv.size() - 1;
        while (i > 0 && x < to_big(pv[i].first)) --i;
        BigReal x0 = to_big(pv[i].first), v0 = to_big(pv[i].second);
        BigReal x1 = (i + 1 < pv.size()) ? to_big(pv[i + 1].first) : BigReal(1);
        BigReal v1 = (i + 1 < pv.size()) ? to_big(pv[i + 1].second) : to_big(wv);
        if (x1 == x0) return v0;
        return BigReal(v0 + (x - x0) * (v1 - v0) / (x1 - x0));
    };
    double sup = std::abs(to_double(wrap));
    for (std::size_t i = 0; i < pv.size(); ++i) {
        Rat x0 = pv[i].first, v0 = pv[i].second;
        Rat x1 = (i + 1 < pv.size()) ? pv[i + 1].first : Rat(1);
        Rat v1 = (i + 1 < pv.size()) ? pv[i + 1].second : wv;
        f.pieces.push_back({x0, x1, sgn(Rat(v1 - v0)), EndVal::of(v0), EndVal::of(v1)});
        if (sgn(v0) * sgn(v1) < 0)
            f.zeros.push_back(Rat(x0 + (x1 - x0) * Rat(-v0) / (v1 - v0)));
        sup = std::max(sup, std::abs(to_double(v0)));
    }
    f.bounded = true;
    f.sup_abs = sup;
    bool mono = true;
    for (auto& p : f.pieces)
        if (p.dir < 0) mono = false;
    f.monotone_nondecreasing = mono;
    return f;
}

// ------------------------------------------------------------- combinators

namespace detail {

// clamp an endpoint value between extended-real bounds; comparisons go
// through the rational lift so piece metadata and variation sums agree
inline EndVal clamp_val(const EndVal& v, const XR& b1, const XR& b2) {
    if (v.inf < 0) return b1.inf ? EndVal::neg_inf() : EndVal::of(b1.v);
    if (v.inf > 0) return b2.inf ? EndVal::pos_inf() : EndVal::of(b2.v);
    Rat r = v.lift();
    if (b1.inf == 0 && r <= b1.v) return EndVal::of(b1.v);
    if (b2.inf == 0 && r >= b2.v) return EndVal::of(b2.v);
    return v;
}

inline std::vector<Rat> infinite_boundary_points(const std::vector<Piece>& pieces) {
    std::vector<Rat> out;
    for (auto& p : pieces) {
        if (p.left.inf) out.push_back(p.lo);
        if (p.right.inf) out.push_back(mod1(p.hi));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

inline PeriodicFunction clamp(const PeriodicFunction& f, const XR& b1, const XR& b2) {
    require(b1 < b2, Err::BadBounds, "clamp: need B1 < B2");
    PeriodicFunction g;
    g.name = "clamp(" + f.name + "," + b1.str() + "," + b2.str() + ")";
    double lo = b1.as_double(), hi = b2.as_double();
    g.fd = [h = f.fd, lo, hi](double x) {
        double t = h(x);
        if (t < lo) t = lo;
        if (t > hi) t = hi;
        return t;
    };
    XR c1 = b1, c2 = b2;
    g.fb = [h = f.fb, c1, c2](const BigReal& x) {
        BigReal t = h(x);
        if (c1.inf == 0 && t < to_big(c1.v)) t = to_big(c1.v);
        if (c2.inf == 0 && t > to_big(c2.v)) t = to_big(c2.v);
        return t;
    };
    if (f.fq)
        g.fq = [h = f.fq, c1, c2](const Rat& x) {
            Rat t = h(x);
            if (c1.inf == 0 && t < c1.v) return c1.v;
            if (c2.inf == 0 && t > c2.v) return c2.v;
            return t;
        };
    for (auto& p : f.pieces)
        g.pieces.push_back({p.lo, p.hi, p.dir, detail::clamp_val(p.left, b1, b2),
                            detail::clamp_val(p.right, b1, b2)});
    bool zero_inside = (b1.inf < 0 || b1.v < 0) && (b2.inf > 0 || b2.v > 0);
    if (zero_inside) g.zeros = f.zeros;
    if (!g.pieces.empty())
        g.singular_points = detail::infinite_boundary_points(g.pieces);
    else if (b1.inf || b2.inf)
        g.singular_points = f.singular_points;
    g.bounded = f.bounded || (b1.inf == 0 && b2.inf == 0);
    if (g.bounded) {
        double cap = std::max(std::abs(lo), std::abs(hi));
        g.sup_abs = f.bounded ? std::min(f.sup_abs, cap)
                              : (std::isfinite(cap) ? cap : f.sup_abs);
    }
    g.monotone_nondecreasing = f.monotone_nondecreasing;
    return g;
}

inline PeriodicFunction clamp(const PeriodicFunction& f, const Rat& b1, const Rat& b2) {
    return clamp(f, XR::finite(b1), XR::finite(b2));
}

// the two-sided truncation [f]_B = clamp(f, -B, B)
inline PeriodicFunction truncate(const PeriodicFunction& f, const Rat& B) {
    require(B > 0, Err::BadBounds, "truncate: need B > 0");
    return clamp(f, XR::finite(Rat(-B)), XR::finite(B));
}

// literal one-constant truncation that sends every out-of-band value,
// including f < -B, to +B; kept for completeness, evaluation only
inline PeriodicFunction truncate_literal(const PeriodicFunction& f, const Rat& B) {
    require(B > 0, Err::BadBounds, "truncate_literal: need B > 0");
    PeriodicFunction g;
    g.name = "truncate_literal(" + f.name + "," + B.get_str() + ")";
    double Bd = to_double(B);
    g.fd = [h = f.fd, Bd](double x) {
        double t = h(x);
        return std::abs(t) <= Bd ? t : Bd;
    };
    Rat Bq = B;
    g.fb = [h = f.fb, Bq](const BigReal& x) {
        BigReal t = h(x);
        return abs(t) <= to_big(Bq) ? t : to_big(Bq);
    };
    if (f.fq)
        g.fq = [h = f.fq, Bq](const Rat& x) {
            Rat t = h(x);
            return rat_abs(t) <= Bq ? t : Bq;
        };
    g.bounded = true;
    g.sup_abs = Bd;
    return g;
}

namespace detail {

struct SignedPiece {
    Piece p;
    int sign;  // sign of f on the open sub-piece
};

inline int endval_sign(const EndVal& v) {
    if (v.inf) return v.inf;
    if (v.exact) return sgn(*v.exact);
    return v.approx > 0 ? 1 : v.approx < 0 ? -1 : 0;
}

// split every monotone piece at its interior sign crossings, so that
// composition with |.|-type maps acts on one-signed monotone pieces
inline std::vector<SignedPiece> split_signed(const PeriodicFunction& f) {
    std::vector<SignedPiece> out;
    for (auto& p : f.pieces) {
        std::vector<Rat> cuts;
        for (auto& z : f.zeros)
            if (p.lo < z && z < p.hi) cuts.push_back(z);
        std::sort(cuts.begin(), cuts.end());
        Rat lo = p.lo;
        EndVal lv = p.left;
        for (std::size_t i = 0; i <= cuts.size(); ++i) {
            Rat hi = (i < cuts.size()) ? cuts[i] : p.hi;
            EndVal rv = (i < cuts.size()) ? EndVal::of(Rat(0)) : p.right;
            int s = endval_sign(lv);
            if (s == 0) s = endval_sign(rv);
            if (s == 0) {
                double mid = f.fd((to_double(lo) + to_double(hi)) / 2);
                s = mid > 0 ? 1 : mid < 0 ? -1 : 0;
            }
            out.push_back({{lo, hi, p.dir, lv, rv}, s});
            lo = hi;
            lv = EndVal::of(Rat(0));
        }
    }
    return out;
}

}  // namespace detail

// F = 1 + |f|; -inf values of f map to the +inf limit of F
inline PeriodicFunction one_plus_abs(const PeriodicFunction& f) {
    PeriodicFunction g;
    g.name = "one_plus_abs(" + f.name + ")";
    g.fd = [h = f.fd](double x) { return 1.0 + std::abs(h(x)); };
    g.fb = [h = f.fb](const BigReal& x) { return BigReal(1 + abs(h(x))); };
    if (f.fq) g.fq = [h = f.fq](const Rat& x) { return Rat(1 + rat_abs(h(x))); };
    auto map_val = [](const EndVal& v, int) -> EndVal {
        if (v.inf) return EndVal::pos_inf();
        if (v.exact) return EndVal::of(Rat(1 + rat_abs(*v.exact)));
        return EndVal::of_d(1.0 + std::abs(v.approx));
    };
    for (auto& sp : detail::split_signed(f))
        g.pieces.push_back({sp.p.lo, sp.p.hi, sp.p.dir * (sp.sign >= 0 ? 1 : -1),
                            map_val(sp.p.left, sp.sign), map_val(sp.p.right, sp.sign)});
    g.singular_points = f.singular_points;
    g.bounded = f.bounded;
    if (f.bounded) g.sup_abs = 1.0 + f.sup_abs;
    return g;
}

// h = log(1+|f|); -inf values of f map to the +inf of the envelope, which
// is upper-singular and meant to be clamped before any variation sum
inline PeriodicFunction log_envelope(const PeriodicFunction& f) {
    PeriodicFunction g;
    g.name = "log_envelope(" + f.name + ")";
    g.fd = [h = f.fd](double x) { return std::log(1.0 + std::abs(h(x))); };
    g.fb = [h = f.fb](const BigReal& x) { return BigReal(log(1 + abs(h(x)))); };
    auto map_val = [](const EndVal& v) -> EndVal {
        if (v.inf) return EndVal::pos_inf();
        if (v.exact && *v.exact == 0) return EndVal::of(Rat(0));
        double a = v.exact ? to_double(*v.exact) : v.approx;
        return EndVal::of_d(std::log(1.0 + std::abs(a)));
    };
    for (auto& sp : detail::split_signed(f))
        g.pieces.push_back({sp.p.lo, sp.p.hi, sp.p.dir * (sp.sign >= 0 ? 1 : -1),
                            map_val(sp.p.left), map_val(sp.p.right)});
    g.singular_points = f.singular_points;
    g.bounded = f.bounded;
    if (f.bounded) g.sup_abs = std::log(1.0 + f.sup_abs);
    return g;
}

// f/(1+|f|): increasing in f, maps the infinities to -1/+1 exactly
inline PeriodicFunction bounded_factor(const PeriodicFunction& f) {
    PeriodicFunction g;
    g.name = "bounded_factor(" + f.name + ")";
    g.fd = [h = f.fd](double x) {
        double t = h(x);
        if (t == -HUGE_VAL) return -1.0;
        if (t == HUGE_VAL) return 1.0;
        return t / (1.0 + std::abs(t));
    };
    g.fb = [h = f.fb](const BigReal& x) {
        BigReal t = h(x);
        if (t == -std::numeric_limits<BigReal>::infinity()) return BigReal(-1);
        if (t == std::numeric_limits<BigReal>::infinity()) return BigReal(1);
        return BigReal(t / (1 + abs(t)));
    };
    if (f.fq)
        g.fq = [h = f.fq](const Rat& x) {
            Rat t = h(x);
            return Rat(t / (1 + rat_abs(t)));
        };
    auto map_val = [](const EndVal& v) -> EndVal {
        if (v.inf < 0) return EndVal::of(Rat(-1));
        if (v.inf > 0) return EndVal::of(Rat(1));
        if (v.exact) return EndVal::of(Rat(*v.exact / (1 + rat_abs(*v.exact))));
        return EndVal::of_d(v.approx / (1.0 + std::abs(v.approx)));
    };
    for (auto& p : f.pieces)
        g.pieces.push_back({p.lo, p.hi, p.dir, map_val(p.left), map_val(p.right)});
    g.zeros = f.zeros;
    g.bounded = true;
    g.sup_abs = f.bounded ? f.sup_abs / (1.0 + f.sup_abs) : 1.0;
    g.monotone_nondecreasing = f.monotone_nondecreasing;
    return g;
}

// ----------------------------------------------------------------- variation

struct VariationEstimate {
    Rat value_q;          // exact value, or the lift of the sampled bound
    double value = 0.0;   // HUGE_VAL when infinite
    bool exact = false;   // true: computed from monotone-piece structure
    bool infinite = false;
    int partitions_used = 0;
};

// certified lower bound from nested dyadic partitions (black-box path and
// the refinement oracle for piecewise functions)
inline VariationEstimate total_variation_refined(const PeriodicFunction& f,
                                                 long max_points = 1 << 18) {
    VariationEstimate r;
    double best = 0.0;
    for (long n = 64; n <= max_points; n *= 2) {
        double f0 = f.fd(0.0), prev = f0, s = 0.0;
        for (long j = 1; j < n; ++j) {
            double v = f.fd(double(j) / double(n));
            s += std::abs(v - prev);
            prev = v;
        }
        s += std::abs(f0 - prev);  // partition ends at x_n = 1, f(1) = f(0)
        ++r.partitions_used;
        if (!std::isfinite(s)) {
            r.infinite = true;
            r.value = HUGE_VAL;
            return r;
        }
        if (s > best) best = s;
    }
    r.value = best;
    r.value_q = rat_of(best);
    return r;
}

inline VariationEstimate total_variation(const PeriodicFunction& f,
                                         long max_refinement = 1 << 18) {
    if (!f.pieces.empty()) {
        Rat var(0);
        bool inf_hit = false;
        auto add = [&](const EndVal& a, const EndVal& b) {
            if (a.inf || b.inf) {
                inf_hit = true;
                return;
            }
            if (a.exact && b.exact)
                var += rat_abs(Rat(*b.exact - *a.exact));
            else
                var += rat_abs(Rat(rat_of(b.approx) - rat_of(a.approx)));
        };
        const auto& ps = f.pieces;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            add(ps[i].left, ps[i].right);
            add(ps[i].right, ps[(i + 1) % ps.size()].left);  // jump (wrap at the end)
        }
        VariationEstimate r;
        if (inf_hit) {
            r.infinite = true;
            r.value = HUGE_VAL;
            return r;
        }
        r.value_q = var;
        r.value = to_double(var);
        r.exact = true;
        return r;
    }
    if (!f.singular_points.empty()) {
        VariationEstimate r;
        r.infinite = true;
        r.value = HUGE_VAL;
        return r;
    }
    return total_variation_refined(f, max_refinement);
}

struct SemiVariation {
    Rat value_q;
    double value = 0.0;
    long B_star = 1;
    bool exact = false;
    std::vector<std::pair<long, double>> per_B;  // (B, Var[f]_B / B)
    // The dyadic grid is a proxy for sup over real B: since Var[f]_B is
    // nondecreasing in B, the true sup restricted to B <= B_max is at most
    // twice the grid maximum.
};

inline SemiVariation semi_variation(const PeriodicFunction& f, long B_max = 1024) {
    require(B_max >= 1, Err::BadBounds, "semi_variation: need B_max >= 1");
    SemiVariation sv;
    bool all_exact = true;
    Rat best(-1);
    for (long B = 1; B <= B_max; B *= 2) {
        auto tv = total_variation(truncate(f, Rat(B)));
        Rat ratio = tv.exact ? Rat(tv.value_q / B) : rat_of(tv.value / double(B));
        if (!tv.exact) all_exact = false;
        sv.per_B.push_back({B, to_double(ratio)});
        if (ratio > best) {
            best = ratio;
            sv.B_star = B;
        }
    }
    sv.value_q = best;
    sv.value = to_double(best);
    sv.exact = all_exact;
    return sv;
}

// ------------------------------------------------------------- integration

namespace detail {

inline double simpson(const std::function<double(double)>& h, double a, double b,
                      double fa, double fm, double fb_) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb_);
}

inline bool adaptive_simpson(const std::function<double(double)>& h, double a, double b,
                             double fa, double fm, double fb_, double whole, double tol,
                             int depth, double& out) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = h(lm), frm = h(rm);
    if (!std::isfinite(flm) || !std::isfinite(frm)) return false;
    double left = simpson(h, a, m, fa, flm, fm);
    double right = simpson(h, m, b, fm, frm, fb_);
    if (depth <= 0) return false;
    if (std::abs(left + right - whole) <= 15.0 * tol) {
        out = left + right + (left + right - whole) / 15.0;
        return true;
    }
    double o1, o2;
    if (!adaptive_simpson(h, a, m, fa, flm, fm, left, tol / 2, depth - 1, o1)) return false;
    if (!adaptive_simpson(h, m, b, fm, frm, fb_, right, tol / 2, depth - 1, o2)) return false;
    out = o1 + o2;
    return true;
}

inline double integrate_smooth(const std::function<double(double)>& h, double a, double b,
                               double tol) {
    if (b <= a) return 0.0;
    double fa = h(a), fb_ = h(b), fm = h(0.5 * (a + b));
    require(std::isfinite(fa) && std::isfinite(fb_) && std::isfinite(fm),
            Err::DivergentIntegral, "integrand not finite away from declared singular points");
    double whole = simpson(h, a, b, fa, fm, fb_);
    double out = 0;
    require(adaptive_simpson(h, a, b, fa, fm, fb_, whole, tol, 40, out),
            Err::DivergentIntegral, "adaptive quadrature failed to converge");
    return out;
}

}  // namespace detail

struct MeanLog {
    double value = 0.0;
    double err = 0.0;
};

// integral of log(1+|f|) over the period; geometric shells with ratio 1/2
// absorb the integrable log singularities
inline MeanLog mean_log(const PeriodicFunction& f, double tol = 1e-9) {
    auto h = [&f](double x) {
        double t = f.fd(x);
        if (std::isinf(t)) return HUGE_VAL;
        return std::log(1.0 + std::abs(t));
    };
    std::vector<double> sing;
    for (auto& s : f.singular_points) sing.push_back(to_double(s));
    std::sort(sing.begin(), sing.end());

    const double w = 1.0 / 256.0;
    MeanLog out;
    if (sing.empty()) {
        out.value = detail::integrate_smooth(h, 0.0, 1.0, tol);
        out.err = tol;
        return out;
    }
    // bulk: complement of the w-windows (periodically, starting after the
    // first singular point's window)
    double total = 0.0;
    for (std::size_t i = 0; i < sing.size(); ++i) {
        double a = sing[i] + w;
        double b = (i + 1 < sing.size()) ? sing[i + 1] - w : sing[0] + 1.0 - w;
        require(b > a, Err::DivergentIntegral, "singular points too close for shell windows");
        auto hw = [&h](double x) { return h(x - std::floor(x)); };
        total += detail::integrate_smooth(hw, a, b, tol / 2);
    }
    // shells toward each singular point from both sides
    for (double s : sing) {
        for (int side = -1; side <= 1; side += 2) {
            double shell_sum = 0.0, last = HUGE_VAL;
            bool converged = false;
            for (int j = 0; j < 900; ++j) {
                double r1 = w * std::pow(0.5, j + 1), r2 = w * std::pow(0.5, j);
                double a = side > 0 ? s + r1 : s - r2;
                double b = side > 0 ? s + r2 : s - r1;
                auto hw = [&h](double x) { return h(x - std::floor(x)); };
                // fixed composite Simpson; shells are smooth
                int m = 16;
                double acc = 0.0;
                for (int k = 0; k < m; ++k) {
                    double u = a + (b - a) * k / m, v = a + (b - a) * (k + 1) / m;
                    double fu = hw(u), fv = hw(v), fmid = hw(0.5 * (u + v));
                    require(std::isfinite(fu) && std::isfinite(fv) && std::isfinite(fmid),
                            Err::DivergentIntegral, "shell sample not finite");
                    acc += detail::simpson(hw, u, v, fu, fmid, fv);
                }
                shell_sum += acc;
                last = acc;
                if (j >= 4 && std::abs(last) < tol / 10) {
                    converged = true;
                    break;
                }
            }
            require(converged, Err::DivergentIntegral,
                    "shell contributions do not shrink: log(1+|f|) not integrable");
            total += shell_sum + 2.0 * std::abs(last);  // geometric tail allowance
            out.err += 2.0 * std::abs(last);
        }
    }
    out.value = total;
    out.err += tol;
    return out;
}

namespace detail {

// integral of h over {h > B} where h >= 0 may blow up at the listed
// singular points; midpoint bulk plus geometric shells toward each pole
inline double tail_above(const std::function<double(double)>& h,
                         const std::vector<Rat>& singulars, double B, long grid) {
    std::vector<double> sing;
    for (auto& s : singulars) sing.push_back(to_double(s));
    const double w = 1.0 / 256.0;
    auto near_singular = [&](double x) {
        for (double s : sing) {
            double d = std::abs(x - s);
            d = std::min(d, 1.0 - d);
            if (d < w) return true;
        }
        return false;
    };
    double total = 0.0;
    for (long j = 0; j < grid; ++j) {
        double x = (j + 0.5) / double(grid);
        if (near_singular(x)) continue;
        double v = h(x);
        if (v > B) total += v / double(grid);
    }
    for (double s : sing) {
        for (int side = -1; side <= 1; side += 2) {
            double last = HUGE_VAL;
            bool converged = false;
            for (int jj = 0; jj < 900; ++jj) {
                double r1 = w * std::pow(0.5, jj + 1), r2 = w * std::pow(0.5, jj);
                double a = side > 0 ? s + r1 : s - r2;
                double b = side > 0 ? s + r2 : s - r1;
                int m = 32;
                double acc = 0.0;
                for (int k = 0; k < m; ++k) {
                    double u = a + (b - a) * (k + 0.5) / m;
                    double v = h(u - std::floor(u));
                    if (v > B) acc += (b - a) / m * v;
                }
                total += acc;
                last = acc;
                if (jj >= 4 && acc < 1e-12) {
                    converged = true;
                    break;
                }
            }
            require(converged, Err::DivergentIntegral, "tail integral does not converge");
            total += 2.0 * last;
        }
    }
    return total;
}

}  // namespace detail

// integral of log(1+|f|) over the set where it exceeds B (the Markov tail
// in the semi-bounded-variation difference bound)
inline double tail_log_integral(const PeriodicFunction& f, double B, long grid = 1 << 17) {
    auto h = [&f](double x) {
        double t = f.fd(x);
        if (std::isinf(t)) return HUGE_VAL;
        return std::log(1.0 + std::abs(t));
    };
    return detail::tail_above(h, f.singular_points, B, grid);
}

// same tail for a function that already lives on the log scale: integrates
// h itself over {h > B}
inline double tail_integral_above(const PeriodicFunction& h, double B, long grid = 1 << 17) {
    auto hv = [&h](double x) {
        double t = h.fd(x);
        return std::isinf(t) ? HUGE_VAL : t;
    };
    return detail::tail_above(hv, h.singular_points, B, grid);
}

// integral over the period of an evaluator that is bounded (clamp upstream
// first when the raw function has poles)
inline double integrate_value(const PeriodicFunction& f, double tol = 1e-10) {
    return detail::integrate_smooth([&f](double x) { return f.fd(x); }, 0.0, 1.0, tol);
}

// ------------------------------------------- finite-difference measure bounds

struct ExceedanceReport {
    double measured = 0.0;  // MC estimate of |{x : |f(x+delta)-f(x)| > A delta}|
    double sigma = 0.0;     // binomial standard error
    std::optional<double> bound_monotone;   // 2 delta + 6 B / A
    std::optional<double> bound_variation;  // 4 delta + 6 Var f / A
    std::optional<double> bound_semi;       // 4d + 6 e^B Var[f]_{e^B}/A + (2/B) tail
    double tail_integral = 0.0;
    long samples = 0;
    bool pass = true;  // measured <= tightest applicable bound + 3 sigma + 1/n
};

inline ExceedanceReport diff_exceedance_measure(const PeriodicFunction& f, double delta,
                                                double A, std::optional<double> B,
                                                long samples, std::uint64_t seed) {
    require(delta > 0 && delta < 1, Err::BadConfig, "delta must be in (0,1)");
    require(A > 0, Err::BadConfig, "A must be positive");
    require(samples >= 10000, Err::BadConfig, "need at least 10^4 samples");
    ExceedanceReport r;
    r.samples = samples;
    Rng rng(seed);
    long count = 0;
    for (long i = 0; i < samples; ++i) {
        double x = rng.uniform();
        double u = f.fd(x);
        double y = x + delta;
        if (y >= 1.0) y -= 1.0;
        double v = f.fd(y);
        double d = std::abs(v - u);
        if (std::isnan(d) || d > A * delta) ++count;
    }
    r.measured = double(count) / double(samples);
    r.sigma = std::sqrt(std::max(r.measured * (1.0 - r.measured), 1.0 / double(samples)) /
                        double(samples));

    double tightest = HUGE_VAL;
    if (f.monotone_nondecreasing && f.bounded) {
        r.bound_monotone = 2.0 * delta + 6.0 * f.sup_abs / A;
        tightest = std::min(tightest, *r.bound_monotone);
    }
    auto tv = total_variation(f);
    if (!tv.infinite) {
        r.bound_variation = 4.0 * delta + 6.0 * tv.value / A;
        tightest = std::min(tightest, *r.bound_variation);
    }
    if (B && *B > 0) {
        double eB = std::exp(*B);
        auto vB = total_variation(truncate(f, rat_of(eB)));
        r.tail_integral = tail_log_integral(f, *B);
        r.bound_semi = 4.0 * delta + 6.0 * eB * vB.value / A + 2.0 / *B * r.tail_integral;
        tightest = std::min(tightest, *r.bound_semi);
    }
    if (std::isfinite(tightest))
        r.pass = r.measured <= tightest + 3.0 * r.sigma + 1.0 / double(samples);
    return r;
}

// ------------------------------------------------------------------ parsing

inline PeriodicFunction parse_potential(const std::string& spec) {
    auto starts = [&](const char* p) { return spec.rfind(p, 0) == 0; };
    auto lambda_of = [&](const std::string& body) -> Rat {
        if (body.empty()) return Rat(1);
        require(body.rfind("lambda=", 0) == 0, Err::BadConfig,
                "expected lambda=<value> in: " + spec);
        auto r = parse_rat(body.substr(7));
        require(r.has_value(), Err::BadConfig, "bad lambda in: " + spec);
        return *r;
    };
    auto family_body = [&](const char* fam, std::size_t len) -> std::optional<std::string> {
        if (spec.size() == len) return std::string();
        if (spec.size() > len && spec[len] == ':') return spec.substr(len + 1);
        return std::nullopt;
    };
    if (spec == "saw") return pf_saw();
    if (starts("const:")) {
        auto c = parse_rat(spec.substr(6));
        require(c.has_value(), Err::BadConfig, "bad constant in: " + spec);
        return pf_const(*c);
    }
    if (starts("cos")) {
        auto b = family_body("cos", 3);
        require(b.has_value(), Err::BadConfig, "bad potential spec: " + spec);
        return pf_cos(lambda_of(*b));
    }
    if (starts("maryland")) {
        auto b = family_body("maryland", 8);
        require(b.has_value(), Err::BadConfig, "bad potential spec: " + spec);
        return pf_maryland(lambda_of(*b));
    }
    if (starts("tanmono")) {
        auto b = family_body("tanmono", 7);
        require(b.has_value(), Err::BadConfig, "bad potential spec: " + spec);
        return pf_tanmono(lambda_of(*b));
    }
    if (starts("steps:[")) {
        require(spec.back() == ']', Err::BadConfig, "steps: missing ]");
        std::string body = spec.substr(7, spec.size() - 8);
        std::vector<std::pair<Rat, Rat>> pts;
        std::size_t i = 0;
        while (i < body.size()) {
            require(body[i] == '(', Err::BadConfig, "steps: expected (x,v)");
            std::size_t j = body.find(')', i);
            require(j != std::string::npos, Err::BadConfig, "steps: missing )");
            std::string pair = body.substr(i + 1, j - i - 1);
            std::size_t c = pair.find(',');
            require(c != std::string::npos, Err::BadConfig, "steps: expected x,v");
            auto x = parse_rat(pair.substr(0, c)), v = parse_rat(pair.substr(c + 1));
            require(x.has_value() && v.has_value(), Err::BadConfig,
                    "steps: bad pair: " + pair);
            pts.push_back({*x, *v});
            i = j + 1;
            if (i < body.size() && body[i] == ',') ++i;
        }
        return pf_steps(pts);
    }
    if (starts("table:")) return pf_table(spec.substr(6));
    fail(Err::BadConfig, "unknown potential spec: " + spec);
}

}  // namespace qpg
