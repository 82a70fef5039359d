#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <qpg/cocycle.hpp>
#include <vector>

using namespace qpg;
using Catch::Approx;

static ContinuedFraction golden(int depth) {
    return expand_surd(Int(-1), Int(1), Int(5), Int(2), depth);
}

static PointSet grid(int n, int off_num = 37, int off_den = 100) {
    std::vector<Rat> xs;
    for (int i = 0; i < n; ++i) xs.push_back(ratio(Int(off_den) * i + off_num, Int(off_den) * n));
    return exact_points(xs, "grid");
}

static MatrixFunction identity_mf() {
    return matrix_function("identity", pf_const(Rat(1)), pf_const(Rat(0)), pf_const(Rat(0)),
                           pf_const(Rat(1)));
}

TEST_CASE("2x2 operator norms against independent closed forms") {
    Mat2<double> id = mat2_id<double>();
    REQUIRE(opnorm(id) == 1.0);

    Mat2<double> diag{2.0, 0.0, 0.0, 0.5};
    REQUIRE(opnorm(diag) == Approx(2.0).margin(1e-15));
    REQUIRE(inv_opnorm(diag) == Approx(2.0).margin(1e-15));

    double th = 0.3;
    Mat2<double> rot{std::cos(th), -std::sin(th), std::sin(th), std::cos(th)};
    REQUIRE(opnorm(rot) == Approx(1.0).margin(1e-15));

    // shear (1, t; 0, 1): largest singular value (t + sqrt(t^2 + 4)) / 2
    Mat2<double> shear{1.0, 3.0, 0.0, 1.0};
    REQUIRE(opnorm(shear) == Approx((3.0 + std::sqrt(13.0)) / 2).epsilon(1e-14));

    // Fibonacci matrix: squared norm solves s^4 - 3 s^2 + 1 = 0, so the
    // norm is the golden ratio
    Mat2<BigReal> fib{BigReal(1), BigReal(1), BigReal(1), BigReal(0)};
    BigReal phi = (1 + sqrt(BigReal(5))) / 2;
    REQUIRE(abs(opnorm(fib) - phi) < BigReal("1e-70"));

    // inverse norm equals the norm exactly on SL(2)
    Rng rng(10007);
    double worst = 0.0;
    for (int t = 0; t < 500; ++t) {
        double a = 0.0;
        while (std::abs(a) < 0.05) a = rng.uniform(-3, 3);
        double b = rng.uniform(-3, 3), c = rng.uniform(-3, 3);
        Mat2<double> m{a, b, c, (1.0 + b * c) / a};
        worst = std::max(worst, std::abs(opnorm(m) - opnorm(m.inverse())) / opnorm(m));
        auto mi = m * m.inverse();
        REQUIRE(mi.a == Approx(1.0).margin(1e-12));
        REQUIRE(mi.d == Approx(1.0).margin(1e-12));
        REQUIRE(std::abs(mi.b) < 1e-12);
        REQUIRE(std::abs(mi.c) < 1e-12);
    }
    REQUIRE(worst < 1e-10);
}

TEST_CASE("characteristic-equation inequalities on SL(2)") {
    // from M^2 - (tr M) M + I = 0 and M - (tr M) I + M^{-1} = 0 applied to
    // unit vectors: ||M^2 v|| >= 1 - |tr M| ||M v|| and
    // |tr M| <= ||M v|| + ||M^{-1} v||
    Rng rng(777);
    double min1 = HUGE_VAL, min2 = HUGE_VAL;
    auto push = [&](const Mat2<double>& m) {
        Mat2<double> m2 = m * m;
        Mat2<double> mi = m.inverse();
        double tr = std::abs(m.trace());
        for (int j = 0; j < 36; ++j) {
            double th = 2.0 * M_PI * j / 36.0;
            double v0 = std::cos(th), v1 = std::sin(th);
            auto w = m.apply(v0, v1);
            auto w2 = m2.apply(v0, v1);
            auto wi = mi.apply(v0, v1);
            double nm = std::hypot(w[0], w[1]);
            double nm2 = std::hypot(w2[0], w2[1]);
            double nmi = std::hypot(wi[0], wi[1]);
            min1 = std::min(min1, nm2 - (1.0 - tr * nm));
            min2 = std::min(min2, nm + nmi - tr);
        }
    };
    for (int t = 0; t < 2000; ++t) {
        double a = 0.0;
        while (std::abs(a) < 0.05) a = rng.uniform(-3, 3);
        double b = rng.uniform(-3, 3), c = rng.uniform(-3, 3);
        push({a, b, c, (1.0 + b * c) / a});
    }
    for (int t = 0; t < 200; ++t) {
        // conjugated shears, trace exactly 2: the near-parabolic edge
        double th = rng.uniform(0, 2.0 * M_PI), s = rng.uniform(-4, 4);
        Mat2<double> r{std::cos(th), -std::sin(th), std::sin(th), std::cos(th)};
        Mat2<double> sh{1.0, s, 0.0, 1.0};
        push(r * sh * r.inverse());
    }
    INFO("min margins " << min1 << " " << min2);
    REQUIRE(min1 >= -1e-10);
    REQUIRE(min2 >= -1e-10);
}

TEST_CASE("schrodinger cocycle: entries, products, guards") {
    auto g = golden(40);

    auto S0 = schrodinger(pf_const(Rat(0)), Rat(0));
    auto m = S0.at(0.123);
    REQUIRE(m.a == 0.0);
    REQUIRE(m.b == -1.0);
    REQUIRE(m.c == 1.0);
    REQUIRE(m.d == 0.0);

    auto S1 = schrodinger(pf_cos(Rat(2)), Rat(1));
    auto m1 = S1.at(0.0);  // 2 cos(0) = 2
    REQUIRE(m1.a == Approx(-1.0).margin(1e-15));
    REQUIRE(S1.bounded);
    REQUIRE(S1.bounded_variation);

    auto Sm = schrodinger(pf_maryland(Rat(1)), Rat(0));
    REQUIRE_FALSE(Sm.bounded);
    REQUIRE_FALSE(Sm.bounded_variation);
    REQUIRE(Sm.singular_points == std::vector<Rat>{Rat(1, 2)});
    REQUIRE(std::isinf(Sm.at(0.5).a));
    REQUIRE(Sm.at(0.5).a > 0);  // E - (-inf)

    // exact pole hit three steps into the walk is refused, not perturbed
    Rat x0 = mod1(Rat(Rat(1, 2) - 3 * g.value()));
    try {
        product<double>(Sm, x0, g, 5);
        FAIL("expected SingularPhase");
    } catch (const Error& e) {
        REQUIRE(e.code == Err::SingularPhase);
        REQUIRE(std::string(e.what()).find("step 3") != std::string::npos);
    }
    // near miss inside the default guard radius
    Rat x1 = mod1(Rat(x0 + Rat(1, Int("100000000000"))));
    try {
        product<double>(Sm, x1, g, 5);
        FAIL("expected SingularPhase");
    } catch (const Error& e) {
        REQUIRE(e.code == Err::SingularPhase);
    }
    // outside it the product goes through
    Rat x2 = mod1(Rat(x0 + Rat(1, 1000)));
    REQUIRE(product<double>(Sm, x2, g, 5).steps == 5);

    // identity cocycle absorbs a million factors without drifting
    auto sp = product<double>(identity_mf(), Rat(1, 7), g, 1000000);
    REQUIRE(sp.log_scale == 0.0);
    REQUIRE(sp.m.a == 1.0);
    REQUIRE(sp.m.b == 0.0);
    REQUIRE(sp.m.c == 0.0);
    REQUIRE(sp.m.d == 1.0);

    // zero-energy free cocycle is a quarter turn: exact identity at n = 4
    auto r4 = product<double>(S0, Rat(2, 7), g, 4);
    REQUIRE(r4.log_scale == 0.0);
    REQUIRE(r4.norm_log() == 0.0);
    REQUIRE(r4.m.a == 1.0);
    REQUIRE(r4.m.d == 1.0);

    // scaled walk against a direct unscaled product
    auto Sc = schrodinger(pf_cos(Rat(2)), rat_of(0.7));
    auto sp12 = product<double>(Sc, Rat(1, 10), g, 12);
    Mat2<double> direct = mat2_id<double>();
    for (int k = 0; k < 12; ++k) {
        Rat ph = mod1(Rat(Rat(1, 10) + k * g.value()));
        direct = Sc.at(to_double(ph)) * direct;
    }
    REQUIRE(sp12.norm_log() == Approx(std::log(opnorm(direct))).epsilon(1e-12));
    REQUIRE(sp12.det_defect() < 1e-10);
    REQUIRE(sp12.det_sign() == 1);

    // renormalization keeps the stored matrix in the working band
    detail::PhaseWalker w(Rat(1, 10), g.value());
    ScaledProduct<double> acc;
    for (int k = 0; k < 200; ++k) {
        acc.absorb(Sc.at(w.value_d()));
        w.advance();
        double ma = acc.m.max_abs();
        REQUIRE(ma >= 0.5);
        REQUIRE(ma <= 2.0);
    }

    // huge-denominator stand-in exercises the exact phase walker
    auto liou = synthesize_liouville(1.5, 4, 6000).cf;
    auto spl = product<double>(identity_mf(), Rat(1, 7), liou, 50);
    REQUIRE(spl.m.a == 1.0);
    REQUIRE(spl.log_scale == 0.0);
}

TEST_CASE("constant cocycle: eigenvalue closed form and the n = 256 bias") {
    auto g = golden(40);
    auto S = schrodinger(pf_const(Rat(0)), Rat(3));
    // eigenvalues (3 +- sqrt 5)/2; the norm correction is the rank-one
    // spectral projector norm ||P_+|| = 3/sqrt 5
    double L = std::log((3.0 + std::sqrt(5.0)) / 2.0);
    double corr = std::log(3.0 / std::sqrt(5.0));

    auto sp64 = product<double>(S, Rat(1, 7), g, 64);
    REQUIRE(sp64.norm_log() == Approx(64 * L + corr).margin(1e-11));

    auto spb = product<BigReal>(S, Rat(1, 7), g, 64);
    BigReal Lb = log((3 + sqrt(BigReal(5))) / 2);
    BigReal corrb = log(3 / sqrt(BigReal(5)));
    REQUIRE(abs(spb.norm_log() - (64 * Lb + corrb)) < BigReal("1e-50"));
    // 261-bit products carry the determinant through this depth intact
    REQUIRE(abs(spb.det_log()) < BigReal("1e-20"));

    // the finite-scale bias (1/n) log ||M_n|| - L = corr / n sits just above
    // 1e-3 at n = 256 and falls under it at n = 512
    double bias256 = corr / 256.0, bias512 = corr / 512.0;
    REQUIRE(bias256 > 1e-3);
    REQUIRE(bias256 < 1.2e-3);
    REQUIRE(bias512 < 1e-3);

    auto est = lyapunov(S, g, 256, grid(5));
    REQUIRE(est.value == Approx(L + bias256).margin(1e-12));
    REQUIRE(est.chain_drop == 0.0);  // g_m = L + corr/m decreases in m
    REQUIRE(est.det_defect < 1e-8);
    for (double v : est.per_phase) REQUIRE(v == Approx(L + bias256).margin(1e-12));

    auto est512 = lyapunov(S, g, 512, grid(5));
    REQUIRE(std::abs(est512.value - L) < 1e-3);
}

TEST_CASE("isometric and parabolic free cocycles") {
    auto g = golden(40);

    // E = 0: quarter-turn rotation, every norm is exactly 1
    auto est = lyapunov(schrodinger(pf_const(Rat(0)), Rat(0)), g, 1024, grid(4));
    REQUIRE(est.value == 0.0);
    for (double v : est.per_phase) REQUIRE(v == 0.0);

    // E = 2: M_n = ((n+1, -n), (n, -(n-1))), entry-square sum 4n^2 + 2
    auto sp = product<double>(schrodinger(pf_const(Rat(0)), Rat(2)), Rat(1, 3), g, 100);
    double T = 4.0 * 100 * 100 + 2.0;
    double sig = std::sqrt((T + std::sqrt(T * T - 4.0)) / 2.0);
    REQUIRE(sp.norm_log() == Approx(std::log(sig)).margin(1e-10));
}

TEST_CASE("factorization S = F G: closed values, identity, stability") {
    auto saw = pf_saw();
    auto fac = factorize(saw);
    REQUIRE(*eval_exact(fac.F, Rat(1, 2)) == Rat(3, 2));

    auto G0 = fac.G(Rat(0));
    REQUIRE(G0.bounded);
    REQUIRE(G0.bounded_variation);
    REQUIRE(G0.singular_points.empty());
    REQUIRE(G0.entry[0].fq(Rat(1, 2)) == Rat(-1, 3));
    REQUIRE(G0.entry[1].fq(Rat(1, 2)) == Rat(-2, 3));
    REQUIRE(G0.entry[2].fq(Rat(1, 2)) == Rat(2, 3));
    REQUIRE(*eval_exact(G0.entry[3], Rat(1, 2)) == Rat(0));

    // f identically 0: F = 1 and G is the free cocycle itself
    auto fac0 = factorize(pf_const(Rat(0)));
    auto Gf = fac0.G(Rat(5, 7));
    auto Sf = schrodinger(pf_const(Rat(0)), Rat(5, 7));
    for (double x : {0.0, 0.3, 0.77}) {
        REQUIRE(fac0.F.fd(x) == 1.0);
        auto a = Gf.at(x), b = Sf.at(x);
        REQUIRE(a.a == b.a);
        REQUIRE(a.b == b.b);
        REQUIRE(a.c == b.c);
        REQUIRE(a.d == b.d);
    }

    // the bounded factor extends to the poles by its one-sided limits
    auto mar = pf_maryland(Rat(1));
    auto Gm = factorize(mar).G(Rat(1));
    auto pole = Gm.at(0.5);  // tan -> -inf from the left piece convention
    REQUIRE(pole.a == 1.0);
    REQUIRE(pole.b == 0.0);
    REQUIRE(pole.c == 0.0);
    REQUIRE(pole.d == 0.0);

    // S(x) = F(x) G(x) entrywise at sampled phases
    Rng rng(555);
    for (const auto& f : {saw, pf_cos(Rat(2)), mar}) {
        auto fc = factorize(f);
        for (const Rat& E : {Rat(0), Rat(1), Rat(3, 7)}) {
            auto S = schrodinger(f, E);
            auto G = fc.G(E);
            for (int t = 0; t < 60; ++t) {
                double x = rng.uniform();
                double Fx = fc.F.fd(x);
                if (std::isinf(f.fd(x))) continue;
                auto s = S.at(x), gg = G.at(x);
                REQUIRE(s.a == Approx(Fx * gg.a).margin(1e-12 * std::max(1.0, std::abs(s.a))));
                REQUIRE(s.b == Approx(Fx * gg.b).margin(1e-12));
                REQUIRE(s.c == Approx(Fx * gg.c).margin(1e-12));
                REQUIRE(s.d == 0.0);
            }
        }
    }

    // F never depends on the energy: two independent factorizations agree
    // bit for bit, and log ||M_n^S|| splits into sum log F + log ||M_n^G||
    auto facA = factorize(pf_cos(Rat(2))), facB = factorize(pf_cos(Rat(2)));
    for (int t = 0; t < 50; ++t) {
        double x = rng.uniform();
        REQUIRE(facA.F.fd(x) == facB.F.fd(x));
    }
    auto g = golden(40);
    auto S = schrodinger(pf_cos(Rat(2)), Rat(1, 4));
    auto G = facA.G(Rat(1, 4));
    double sum_logF = 0.0;
    {
        detail::PhaseWalker w(Rat(1, 7), g.value());
        for (int k = 0; k < 256; ++k) {
            sum_logF += std::log(facA.F.fd(w.value_d()));
            w.advance();
        }
    }
    double lhs = product<double>(S, Rat(1, 7), g, 256).norm_log();
    double rhs = sum_logF + product<double>(G, Rat(1, 7), g, 256).norm_log();
    REQUIRE(lhs == Approx(rhs).margin(1e-9));

    // all four bounded-factor entries have refinement-stable variation
    for (const Rat& E : {Rat(0), Rat(1)}) {
        auto Gt = factorize(mar).G(E);
        for (const auto& e : Gt.entry) {
            double v12 = total_variation_refined(e, 1 << 12).value;
            double v13 = total_variation_refined(e, 1 << 13).value;
            REQUIRE(v13 >= v12);  // nested partitions
            REQUIRE(v13 - v12 <= 0.01 * std::max(1.0, v13));
        }
    }
}

TEST_CASE("almost Mathieu at coupling 2: Herman floor and orbit oracle") {
    auto g = golden(40);
    auto f = pf_cos(Rat(4));  // potential 2 lambda cos(2 pi x), lambda = 2
    double floor = std::log(2.0) - 0.02;

    Rng rng(20260818);
    auto ph = grid(128);
    for (int t = 0; t < 10; ++t) {
        Rat E = rat_of(rng.uniform(-4, 4));
        auto est = lyapunov(schrodinger(f, E), g, 2048, ph);
        INFO("E = " << to_double(E) << " L_hat = " << est.value);
        REQUIRE(est.value >= floor);
        REQUIRE(est.det_defect < 1e-8);
        REQUIRE(est.chain_drop < 0.01);
    }

    // grid mean against a single long orbit
    for (double Ed : {0.0, 1.2345}) {
        Rat E = rat_of(Ed);
        auto S = schrodinger(f, E);
        double grid_est = lyapunov(S, g, 4096, ph).value;
        double orbit = product<double>(S, Rat(1, 3), g, 1 << 16).norm_log() / double(1 << 16);
        INFO("E = " << Ed << " grid " << grid_est << " orbit " << orbit);
        REQUIRE(std::abs(grid_est - orbit) < 0.03);
        REQUIRE(orbit >= floor);
    }

    // at 261 bits the determinant stays resolvable well past the window
    // that 53 bits can certify
    auto spb = product<BigReal>(schrodinger(f, Rat(0)), Rat(1, 3), g, 100);
    REQUIRE(abs(spb.det_log()) < BigReal("1e-15"));
}

TEST_CASE("uniform upper bound: constant cocycle ledger walkthrough") {
    auto g = golden(40);
    auto S = schrodinger(pf_const(Rat(0)), Rat(3));
    double L = std::log((3.0 + std::sqrt(5.0)) / 2.0);
    double corr = std::log(3.0 / std::sqrt(5.0));

    UniformOptions opt;
    opt.epsilon = 0.1;
    auto rep = uniform_upper_margin(S, g, 1024, grid(64), opt);

    // phase independence: the profile is flat up to summation roundoff
    REQUIRE(rep.margin >= 0.0);
    REQUIRE(rep.margin < 1e-13);
    REQUIRE(rep.L_hat == Approx(L + corr / 1024).margin(1e-9));
    REQUIRE(rep.achieved_at == 4);  // g_4 - L_hat = 0.0732 first dips under 0.1
    REQUIRE(rep.within_epsilon);

    const auto& led = rep.ledger;
    REQUIRE(led.satisfied);
    REQUIRE(led.m0 == 16);  // mean gap 0.0364 at 8, 0.0181 at 16
    REQUIRE(led.C1 == Approx(std::log((std::sqrt(117.0) + 11.0) / 2) / 2).epsilon(1e-12));
    REQUIRE(led.A == Approx(2 * led.C1).epsilon(1e-12));
    REQUIRE(led.truncation_deficit == 0.0);
    REQUIRE(led.C2 == 0.0);
    REQUIRE(led.k0 == 1);
    REQUIRE(led.Dk_bound == Rat(2));
    REQUIRE(led.n0 == 16 * 48);  // ceil(4 C1 / eps) = 48 dominates k0
    REQUIRE(led.obstruction.empty());
}

TEST_CASE("uniform upper bound: factorized almost Mathieu cocycle") {
    auto g = golden(40);
    auto fac = factorize(pf_cos(Rat(2)));
    auto G = fac.G(Rat(0));

    UniformOptions opt;
    opt.epsilon = 0.1;
    auto rep = uniform_upper_margin(G, g, 4096, grid(128), opt);
    INFO("margin " << rep.margin << " at n " << rep.n << " achieved_at " << rep.achieved_at
                   << " m0 " << rep.ledger.m0 << " A " << rep.ledger.A << " C2 " << rep.ledger.C2
                   << " k0 " << rep.ledger.k0 << " obstruction " << rep.ledger.obstruction);
    REQUIRE(rep.ledger.satisfied);
    REQUIRE(rep.within_epsilon);
    REQUIRE(rep.margin >= 0.0);
    REQUIRE(rep.ledger.C2 * to_double(rep.ledger.Dk_bound) < opt.epsilon / 4);

    // the chain never rises above the one-step sup
    for (const auto& row : rep.chain) REQUIRE(row.max_g <= rep.ledger.C1 + 1e-12);

    // raw unbounded entries are refused
    try {
        uniform_upper_margin(schrodinger(pf_maryland(Rat(1)), Rat(0)), g, 64, grid(8), opt);
        FAIL("expected UnboundedEntries");
    } catch (const Error& e) {
        REQUIRE(e.code == Err::UnboundedEntries);
    }
}

TEST_CASE("subadditive scalar driver: trivial, Birkhoff, and agreement") {
    auto g = golden(40);

    // zero cocycle: everything collapses to the trivial ledger
    ScalarCocycle zero = [](long, const Rat&) { return 0.0; };
    UniformOptions opt;
    opt.epsilon = 0.1;
    auto rep0 = subadditive_uniform_margin(zero, g, 64, grid(16), opt);
    REQUIRE(rep0.margin == 0.0);
    REQUIRE(rep0.L_hat == 0.0);
    REQUIRE(rep0.achieved_at == 1);
    REQUIRE(rep0.ledger.satisfied);
    REQUIRE(rep0.ledger.m0 == 1);
    REQUIRE(rep0.ledger.C2 == 0.0);
    REQUIRE(rep0.ledger.k0 == 1);

    // additive Birkhoff sums of the sawtooth: the margin is a Koksma bound
    // in disguise and the mean pins the integral 1/2
    ScalarCocycle birk = [alpha = g.value()](long m, const Rat& x) {
        detail::PhaseWalker w(mod1(x), alpha);
        double s = 0.0;
        for (long k = 0; k < m; ++k) {
            s += w.value_d();
            w.advance();
        }
        return s;
    };
    UniformOptions ob;
    ob.epsilon = 0.02;
    auto repb = subadditive_uniform_margin(birk, g, 2048, grid(32), ob);
    INFO("L_hat " << repb.L_hat << " margin " << repb.margin << " m0 " << repb.ledger.m0 << " C2 "
                  << repb.ledger.C2 << " k0 " << repb.ledger.k0);
    REQUIRE(repb.ledger.satisfied);
    REQUIRE(std::abs(repb.L_hat - 0.5) < 0.01);
    REQUIRE(repb.margin < 0.02);

    // matrix wrapper and scalar driver are definitionally the same engine
    auto G = factorize(pf_cos(Rat(2))).G(Rat(0));
    ScalarCocycle gmat = [&G, alpha = g.value()](long m, const Rat& x) {
        return detail::walk<double>(G, x, alpha, m, Rat(1, kDefaultGuardDen),
                                    [](long, const ScaledProduct<double>&) {})
            .norm_log();
    };
    auto ra = subadditive_uniform_margin(gmat, g, 512, grid(32), opt);
    auto rb = uniform_upper_margin(G, g, 512, grid(32), opt);
    REQUIRE(ra.L_hat == rb.L_hat);
    REQUIRE(ra.margin == rb.margin);
    REQUIRE(ra.ledger.m0 == rb.ledger.m0);
    REQUIRE(ra.ledger.C2 == rb.ledger.C2);

    // explicit ledger overrides: a valid block length sticks, a bad one is
    // reported as an obstruction, a truncation level under C1 is rejected
    auto S3 = schrodinger(pf_const(Rat(0)), Rat(3));
    UniformOptions o64;
    o64.epsilon = 0.1;
    o64.m0 = 64;
    auto r64 = uniform_upper_margin(S3, g, 1024, grid(16), o64);
    REQUIRE(r64.ledger.m0 == 64);
    REQUIRE(r64.ledger.satisfied);

    UniformOptions o2;
    o2.epsilon = 0.1;
    o2.m0 = 2;
    auto r2 = uniform_upper_margin(S3, g, 1024, grid(16), o2);
    REQUIRE_FALSE(r2.ledger.satisfied);
    REQUIRE_FALSE(r2.ledger.obstruction.empty());

    UniformOptions oa;
    oa.epsilon = 0.1;
    oa.A = 0.5;  // below the one-step sup
    try {
        uniform_upper_margin(S3, g, 256, grid(8), oa);
        FAIL("expected BadBounds");
    } catch (const Error& e) {
        REQUIRE(e.code == Err::BadBounds);
    }
}
