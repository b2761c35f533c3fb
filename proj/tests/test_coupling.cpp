#include "zrh/coupling.hpp"
#include "zrh/invariant.hpp"
#include "zrh/parallel.hpp"
#include "zrh/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace zrh;

namespace {

const InitialProfile kUnitBlock = InitialProfile::parse("-1:0:1");

Configuration sample(const InitialProfile& rho0, const ModelParams& prm, Window w, std::uint64_t seed) {
    auto rng = make_stream(seed, 999);
    return build_initial(rho0, prm, w, rng);
}

double mean_left_mass(std::int64_t N, std::size_t replicas) {
    const ModelParams prm{0.75, 1.0, 0.0, N};
    const Window w = choose_window({-1.0, 0.0}, prm, 1.0, 1.0);
    const auto v = parallel_map(replicas, [&](std::size_t r) {
        auto rng = make_stream(40 + static_cast<std::uint64_t>(N), r);
        auto init = build_initial(kUnitBlock, prm, w, rng);
        return run_second_class(init, prm, RateFunction::linear(), 1.0, std::move(rng)).left_mass;
    });
    return mean_se(v).mean;
}

double mean_discrepancy_per_site(std::int64_t N, std::size_t replicas) {
    const ModelParams prm{1.0, 1.0, 1.0, N};
    const Window w = choose_window({-1.0, 0.0}, prm, 1.0, 1.0);
    const auto v = parallel_map(replicas, [&](std::size_t r) {
        auto rng = make_stream(70 + static_cast<std::uint64_t>(N), r);
        auto init = build_initial(kUnitBlock, prm, w, rng);
        const auto res = run_labeled_coupling(init, prm, RateFunction::linear(), 1.0, std::move(rng));
        return static_cast<double>(res.discrepancy) / static_cast<double>(N);
    });
    return mean_se(v).mean;
}

} // namespace

TEST(SecondClass, NoConversionWithoutDestruction) {
    const ModelParams prm{0.75, 0.0, 0.0, 50};
    const Window w{-100, 150};
    const auto res = run_second_class(sample(kUnitBlock, prm, w, 1), prm, RateFunction::linear(), 1.0, make_stream(1, 0));
    EXPECT_EQ(res.created, 0);
    EXPECT_EQ(res.state.zeta.mass(), 0);
}

TEST(SecondClass, ClosedPairConservesMass) {
    const ModelParams prm{0.75, 1.0, 0.0, 50};
    const Window w{-60, 60};
    const auto init = sample(kUnitBlock, prm, w, 2);
    SecondClassOptions opt;
    opt.boundary = Boundary::closed;
    opt.check_interval = 1;
    SecondClassEngine e(init, prm, RateFunction::linear(), make_stream(2, 0), opt);
    std::vector<double> times;
    for (int k = 1; k <= 20; ++k) times.push_back(0.1 * k);
    e.run(2.0, times, [&](double, const SecondClassState& s) {
        ASSERT_EQ(s.omega.mass() + s.zeta.mass(), init.mass());
        ASSERT_EQ(s.zeta.mass(), s.conversions);
    });
    EXPECT_GT(e.created(), 0);
}

TEST(SecondClass, LabelsTrackCounts) {
    const ModelParams prm{0.75, 2.0, 0.0, 40};
    const Window w{-80, 200};
    SecondClassOptions opt;
    opt.labels = true;
    const auto res = run_second_class(sample(kUnitBlock, prm, w, 3), prm, RateFunction::linear(), 1.0, make_stream(3, 0), opt);
    ASSERT_EQ(static_cast<Count>(res.state.labels.size()), res.created);
    std::vector<Count> counts(w.size(), 0);
    for (auto pos : res.state.labels)
        if (pos >= 0) ++counts[static_cast<std::size_t>(pos)];
    EXPECT_EQ(counts, res.state.zeta.occupation);
}

TEST(SecondClass, RejectsNonAttractiveRate) {
    EXPECT_THROW(RateFunction({0.0, 2.0, 1.0}, 1.0), monotonicity_error);
}

TEST(SecondClass, LeftMassBasics) {
    SecondClassState s;
    s.zeta = Configuration(Window{-10, 10});
    EXPECT_EQ(second_class_left_mass(s, 100), 0.0);
    s.zeta[5] = 1;
    EXPECT_EQ(second_class_left_mass(s, 100), 0.0);
    s.zeta[0] = 2;
    s.zeta[-3] = 1;
    EXPECT_DOUBLE_EQ(second_class_left_mass(s, 100), 0.03);
}

TEST(SecondClass, CreatedCountWithinBound) {
    // mean K_1 <= 1.1 a0 rho* alpha N^{1+beta} t = 11 at N = 100, beta = -1/2
    const ModelParams prm{0.75, 1.0, -0.5, 100};
    const Window w = choose_window({-1.0, 0.0}, prm, 1.0, 1.0);
    const auto k = parallel_map(100, [&](std::size_t r) {
        auto rng = make_stream(5, r);
        auto init = build_initial(kUnitBlock, prm, w, rng);
        return static_cast<double>(run_second_class(init, prm, RateFunction::linear(), 1.0, std::move(rng)).created);
    });
    const auto m = mean_se(k);
    EXPECT_LE(m.mean, 11.0);
    EXPECT_LE(m.mean, 6.0 * 100.0);
    EXPECT_GT(m.mean, 0.0);
}

TEST(SecondClass, LeftMassDecreasesWithN) {
    const double a = mean_left_mass(50, 200), b = mean_left_mass(100, 200), c = mean_left_mass(200, 200);
    EXPECT_GT(a, b);
    EXPECT_GT(b, c);
}

TEST(BasicCoupling, OrderingDefect) {
    PairConfiguration p{Configuration(Window{0, 3}), Configuration(Window{0, 3})};
    EXPECT_EQ(ordering_defect(p, 0, 1), 0);
    p.varpi[0] = 1;
    p.omega[1] = 2;
    p.varpi[1] = 1;
    EXPECT_EQ(ordering_defect(p, 0, 1), 1);
    EXPECT_EQ(ordering_defect(p, 1, 0), 1);
    p.omega[1] = 0;
    EXPECT_EQ(ordering_defect(p, 0, 1), 0);
}

TEST(BasicCoupling, IdenticalCopiesReproduceSingleEngine) {
    for (const auto& rate : {RateFunction::linear(), RateFunction::indicator(), RateFunction::bounded(3)}) {
        const ModelParams prm{0.75, 1.0, 0.0, 60};
        const Window w{-90, 160};
        const auto init = sample(kUnitBlock, prm, w, 6);
        EventEngine single(init, prm, rate, make_stream(6, 1));
        single.run(1.5);
        BasicCouplingEngine pair({init, init}, prm, rate, make_stream(6, 1));
        pair.run(1.5);
        EXPECT_EQ(pair.events(), single.events()) << rate.name();
        EXPECT_EQ(pair.pair().omega.occupation, single.configuration().occupation) << rate.name();
        EXPECT_EQ(pair.pair().varpi.occupation, single.configuration().occupation) << rate.name();
        EXPECT_EQ(pair.pair().omega.destroyed, single.configuration().destroyed) << rate.name();
        EXPECT_DOUBLE_EQ(pair.time(), single.time());
    }
}

TEST(BasicCoupling, PreservesOrderEveryEvent) {
    for (const auto& rate : {RateFunction::linear(), RateFunction::indicator(), RateFunction::bounded(2)}) {
        const ModelParams prm{0.75, 1.0, 0.0, 50};
        const Window w{-60, 60};
        auto omega = sample(InitialProfile::parse("-1:0:0.5"), prm, w, 7);
        auto extra = sample(InitialProfile::parse("-0.6:0.6:0.7"), prm, w, 8);
        Configuration varpi = omega;
        for (std::size_t i = 0; i < w.size(); ++i) varpi.occupation[i] += extra.occupation[i];
        EngineOptions opt;
        opt.boundary = Boundary::closed;
        BasicCouplingEngine e({omega, varpi}, prm, rate, make_stream(7, 0), opt);
        ASSERT_EQ(e.order_sign(), +1);
        for (int k = 0; k < 50000 && e.step(); ++k) {}
        EXPECT_EQ(e.violations(), 0u) << rate.name();
        EXPECT_EQ(order_violations(e.pair(), +1), 0u) << rate.name();
        EXPECT_LT(e.verify_rates(), 1e-9);
    }
}

TEST(BasicCoupling, ReversedOrderAlsoPreserved) {
    const ModelParams prm{0.8, 0.5, 0.0, 40};
    const Window w{-50, 50};
    auto varpi = sample(InitialProfile::parse("-1:0.5:0.8"), prm, w, 9);
    Configuration omega = varpi;
    omega[0] += 3;
    omega[-7] += 2;
    EngineOptions opt;
    opt.boundary = Boundary::closed;
    BasicCouplingEngine e({omega, varpi}, prm, RateFunction::linear(), make_stream(9, 0), opt);
    ASSERT_EQ(e.order_sign(), -1);
    for (int k = 0; k < 20000 && e.step(); ++k) {}
    EXPECT_EQ(e.violations(), 0u);
}

TEST(BasicCoupling, StationaryMarginalAtOrigin) {
    // second copy from the two-level invariant measure; g(varpi_0) time-averaged over [0, 1]
    const ModelParams prm{1.0, 1.0, 0.0, 50};
    const Window w{-150, 150};
    const auto prof = build_profile(prm, TwoLevel{1.0}, w);
    std::vector<double> times;
    for (int k = 0; k <= 100; ++k) times.push_back(0.01 * k);
    const auto g0 = parallel_map(100, [&](std::size_t r) {
        auto rng = make_stream(10, r);
        auto varpi = sample_stationary(prof, RateFunction::linear(), rng);
        Configuration omega(w);
        EngineOptions opt;
        opt.boundary = Boundary::closed;
        BasicCouplingEngine e({omega, varpi}, prm, RateFunction::linear(), std::move(rng), opt);
        double acc = 0.0;
        e.run(1.0, times, [&](double, const PairConfiguration& p) { acc += static_cast<double>(p.varpi.at(0)); });
        return acc / static_cast<double>(times.size());
    });
    const auto m = mean_se(g0);
    EXPECT_LE(std::abs(m.mean - 1.0), 3.0 * m.se) << m.mean << " +- " << m.se;
}

TEST(LabeledCoupling, NoDestructionMeansNoDiscrepancy) {
    const ModelParams prm{0.75, 0.0, 1.0, 50};
    const Window w = choose_window({-1.0, 0.0}, prm, 1.0, 1.0);
    const auto res = run_labeled_coupling(sample(kUnitBlock, prm, w, 11), prm, RateFunction::linear(), 1.0, make_stream(11, 0));
    EXPECT_EQ(res.discrepancy, 0);
}

TEST(LabeledCoupling, NoVisitNoDiscrepancy) {
    const ModelParams prm{1.0, 1.0, 1.0, 50};
    const Window w{0, 200};
    const auto res = run_labeled_coupling(sample(InitialProfile::parse("0.1:0.5:1"), prm, w, 12), prm, RateFunction::linear(), 1.0,
                                          make_stream(12, 0));
    EXPECT_EQ(res.discrepancy, 0);
}

TEST(LabeledCoupling, EtaBelowOmega) {
    const ModelParams prm{0.75, 1.0, 1.0, 50};
    const Window w = choose_window({-1.0, 0.0}, prm, 1.0, 1.0);
    const auto res = run_labeled_coupling(sample(kUnitBlock, prm, w, 13), prm, RateFunction::linear(), 1.0, make_stream(13, 0));
    for (auto x = w.x_min; x <= w.x_max; ++x) ASSERT_LE(res.state.eta(x), res.state.omega(x));
    EXPECT_EQ(res.state.eta(0), 0);
    EXPECT_GT(res.discrepancy, 0);
}

TEST(LabeledCoupling, RejectsSmallBeta) {
    const ModelParams prm{0.75, 1.0, 0.5, 50};
    EXPECT_THROW(run_labeled_coupling(Configuration(Window{-5, 5}), prm, RateFunction::linear(), 1.0, make_stream(0, 0)),
                 std::invalid_argument);
}

TEST(LabeledCoupling, DiscrepancyShrinksWithN) {
    const double a = mean_discrepancy_per_site(25, 100), b = mean_discrepancy_per_site(50, 100), c = mean_discrepancy_per_site(100, 100);
    EXPECT_GT(a, b);
    EXPECT_GT(b, c);
}

TEST(OneBlock, ConstantAndEmpty) {
    const auto thermo = make_thermo(RateFunction::linear(), 10.0);
    Configuration c(Window{0, 99});
    auto v = one_block_statistic(c, 100, 5, *thermo);
    for (double x : v.values) EXPECT_EQ(x, 0.0);
    for (auto& o : c.occupation) o = 3;
    v = one_block_statistic(c, 100, 5, *thermo);
    for (std::size_t i = 5; i + 5 < v.values.size(); ++i) EXPECT_NEAR(v.values[i], 0.0, 1e-9);
}

TEST(OneBlock, ShrinksWithBlockSize) {
    const auto thermo = make_thermo(RateFunction::indicator(), 10.0);
    const Window w{0, 19999};
    auto rng = make_stream(14, 0);
    const MarginalLaw law = thermo->marginal_for_density(1.0);
    Configuration c(w);
    for (auto& o : c.occupation) o = law.sample(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t ell : {5, 20, 80}) {
        const auto v = one_block_statistic(c, 100, ell, *thermo);
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 100; i + 100 < v.values.size(); ++i, ++n) s += v.values[i];
        const double mean = s / static_cast<double>(n);
        EXPECT_LT(mean, prev) << ell;
        prev = mean;
    }
}

TEST(YoungMeasure, TrivialCases) {
    Configuration c(Window{-20, 120});
    EXPECT_EQ(young_measure_eval(c, 100, 3, [](double, double) { return 0.0; }), 0.0);
    EXPECT_EQ(young_measure_eval(c, 100, 3, [](double u, double l) { return std::sin(u) * l; }), 0.0);
    c[50] = 4;
    EXPECT_EQ(young_measure_eval(c, 100, 3, [](double, double) { return 0.0; }), 0.0);
}

TEST(YoungMeasure, MatchesEmpiricalPairing) {
    const ModelParams prm{0.75, 0.0, 0.0, 200};
    const Window w{-100, 400};
    const auto c = sample(InitialProfile::parse("0:1.5:1"), prm, w, 15);
    auto h = [](double u) { return detail::bump1((u - 0.5) / 0.3); };
    for (std::int64_t ell : {2, 5, 10}) {
        const double young = young_measure_eval(c, prm.N, ell, [&](double u, double l) { return h(u) * l; });
        double direct = 0.0;
        for (auto x = w.x_min; x <= w.x_max; ++x) direct += h(static_cast<double>(x) / 200.0) * static_cast<double>(c.at(x));
        direct /= 200.0;
        const double bound = static_cast<double>(2 * ell + 1) * static_cast<double>(c.max_occupation()) * 1.0 / 200.0;
        EXPECT_LE(std::abs(young - direct), bound) << ell;
    }
}

TEST(EntropyFunctional, VanishesOnDiagonalAndZeroTest) {
    const ModelParams prm{0.75, 1.0, 0.0, 100};
    const auto thermo = make_thermo(RateFunction::linear(), 20.0);
    const Window w = choose_window({-1.0, 0.0}, prm, 1.0, 1.0);
    auto init = sample(kUnitBlock, prm, w, 16);
    EventEngine e(init, prm, RateFunction::linear(), make_stream(16, 0));
    std::vector<double> times;
    for (int k = 0; k <= 50; ++k) times.push_back(0.02 * k);
    std::vector<PairSnapshot> snaps;
    e.run(1.0, times, [&](double t, const Configuration& c) { snaps.push_back({t, c, c}); });
    ASSERT_EQ(snaps.size(), times.size());
    for (const auto& h : {bump(0.1, 0.9, -0.8, 0.4), hat(0.0, 1.0, -0.5, 0.5)})
        EXPECT_EQ(micro_entropy_functional(snaps, h, 5, *thermo, prm), 0.0);
    for (auto& s : snaps) s.varpi = Configuration(w);
    EXPECT_EQ(micro_entropy_functional(snaps, zero_test_function(), 5, *thermo, prm), 0.0);
    EXPECT_NE(micro_entropy_functional(snaps, bump(0.1, 0.9, -0.8, 0.4), 5, *thermo, prm), 0.0);
    EXPECT_THROW(micro_entropy_functional(snaps, bump(0.1, 0.9, -5.0, 0.4), 5, *thermo, prm), support_error);
}
