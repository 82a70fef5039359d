#pragma once
// Shared numeric kit: exact rationals and integers (GMP), high-precision
// reals (MPFR through boost.multiprecision), and the conversions between
// them that the rest of the library leans on.

#include <gmpxx.h>
#include <mpfr.h>
#include <boost/multiprecision/mpfr.hpp>

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

namespace qpg {

inline constexpr const char* version = "1.0.0";

using Int = mpz_class;
using Rat = mpq_class;

namespace mp = boost::multiprecision;

// 78 decimal digits ~ 261 bits.  The Liouville-scale gap checks subtract
// matrices that agree to ~e^-140, so 53 bits are hopeless but 261 leave
// about 18 significant digits in the difference.
using BigReal = mp::number<mp::mpfr_float_backend<78>, mp::et_off>;

inline BigReal to_big(const Rat& x) {
    BigReal r;
    mpfr_set_q(r.backend().data(), x.get_mpq_t(), MPFR_RNDN);
    return r;
}

inline BigReal to_big(const Int& x) {
    BigReal r;
    mpfr_set_z(r.backend().data(), x.get_mpz_t(), MPFR_RNDN);
    return r;
}

inline BigReal big_pi() {
    BigReal r;
    mpfr_const_pi(r.backend().data(), MPFR_RNDN);
    return r;
}

// exact: every double is a dyadic rational
inline Rat rat_of(double d) {
    Rat r;
    mpq_set_d(r.get_mpq_t(), d);
    return r;
}

inline double to_double(const Rat& x) { return x.get_d(); }
inline double to_double(const BigReal& x) { return x.convert_to<double>(); }

inline Int rat_floor(const Rat& x) {
    Int q;
    mpz_fdiv_q(q.get_mpz_t(), x.get_num_mpz_t(), x.get_den_mpz_t());
    return q;
}

// fractional part in [0,1)
inline Rat mod1(const Rat& x) { return x - Rat(rat_floor(x)); }

inline Rat rat_abs(const Rat& x) { return x >= 0 ? x : Rat(-x); }

inline Rat rat_clamp(const Rat& v, const Rat& lo, const Rat& hi) {
    if (v < lo) return lo;
    if (v > hi) return hi;
    return v;
}

// natural log of a positive big integer without overflow
inline double log_mpz(const Int& z) {
    signed long exp2;
    double m = mpz_get_d_2exp(&exp2, z.get_mpz_t());
    return std::log(m) + double(exp2) * 0.6931471805599453;
}

inline int sgn(const Rat& x) { return mpq_sgn(x.get_mpq_t()); }

// shortest round-trip-exact decimal for doubles; reports use this everywhere
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_big(const BigReal& v, int digits = 30) {
    return v.str(digits, std::ios_base::scientific);
}

// Parses "p/q", an integer, or a decimal string into an exact rational.
// Decimals are taken literally: "0.15" -> 3/20, never a float detour.
inline std::optional<Rat> parse_rat(const std::string& s) {
    if (s.empty()) return std::nullopt;
    if (s.find('/') != std::string::npos) {
        Rat r;
        if (mpq_set_str(r.get_mpq_t(), s.c_str(), 10) != 0) return std::nullopt;
        if (r.get_den() == 0) return std::nullopt;
        r.canonicalize();
        return r;
    }
    std::size_t i = 0;
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') { neg = (s[i] == '-'); ++i; }
    std::string digits;
    long frac_len = 0;
    bool seen_dot = false, any = false;
    for (; i < s.size(); ++i) {
        if (s[i] == '.') {
            if (seen_dot) return std::nullopt;
            seen_dot = true;
        } else if (s[i] >= '0' && s[i] <= '9') {
            digits += s[i];
            if (seen_dot) ++frac_len;
            any = true;
        } else {
            return std::nullopt;
        }
    }
    if (!any) return std::nullopt;
    Int num(digits, 10), den(1);
    for (long k = 0; k < frac_len; ++k) den *= 10;
    Rat r(num, den);
    r.canonicalize();
    return neg ? Rat(-r) : r;
}

// reduced fraction num/den (the raw two-argument Rat constructor skips
// canonicalization, which mpq equality silently requires)
inline Rat ratio(const Int& num, const Int& den) {
    Rat r(num, den);
    r.canonicalize();
    return r;
}

// deterministic rng: all randomized scans are reproducible from the seed
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform() {
        // 53-bit uniform in [0,1)
        return double(gen() >> 11) * 0x1.0p-53;
    }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    // exact dyadic rational in [0,1), 32 bits
    Rat rat01() {
        Rat r(long(gen() >> 32), 0x100000000L);
        r.canonicalize();  // mpq comparisons and equality assume reduced form
        return r;
    }
    long integer(long lo, long hi) {
        return lo + long(gen() % std::uint64_t(hi - lo + 1));
    }
};

}  // namespace qpg
