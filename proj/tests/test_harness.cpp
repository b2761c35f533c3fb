#include "zrh/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace zrh;

namespace {

ExperimentSpec small_oracle() {
    ExperimentSpec s;
    s.name = "small";
    s.p = 0.75;
    s.alpha = 1.0;
    s.beta = 0.0;
    s.Ns = {50};
    s.rho0 = "-1:0:1";
    s.times = {0.4, 0.8};
    s.ell = 5;
    s.replicas = 20;
    s.seed = 3;
    s.du = 0.02;
    s.target = Target::oracle;
    s.tolerance = 0.15;
    s.exclude = 0.05;
    return s;
}

std::filesystem::path scratch(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("zrh_harness_" + name);
    std::filesystem::remove_all(d);
    return d;
}

} // namespace

TEST(Format, TwelveSignificantDigits) {
    EXPECT_EQ(fmt12(1.0 / 3.0), "0.333333333333");
    EXPECT_EQ(fmt12(2.0), "2");
    EXPECT_EQ(fmt12(-1.5e-20), "-1.5e-20");
}

TEST(Compare, OracleRowsAndDeterminism) {
    const auto a = compare(small_oracle());
    ASSERT_TRUE(a.error.empty()) << a.error;
    ASSERT_EQ(a.rows.size(), 2u);
    for (const auto& r : a.rows) {
        EXPECT_EQ(r.u.size(), 200u);
        EXPECT_LE(r.l1, 0.15);
        EXPECT_GT(r.se, 0.0);
        EXPECT_TRUE(r.pass);
    }
    const auto b = compare(small_oracle());
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
        EXPECT_EQ(a.rows[k].l1, b.rows[k].l1);
        EXPECT_EQ(a.rows[k].empirical, b.rows[k].empirical);
    }
    EXPECT_EQ(report_json(a).dump(), report_json(b).dump());
    std::ostringstream ca, cb;
    write_profile_csv(ca, a);
    write_profile_csv(cb, b);
    EXPECT_EQ(ca.str(), cb.str());
}

TEST(Compare, ExclusionBands) {
    auto s = small_oracle();
    s.replicas = 2;
    const auto r = compare(s);
    ASSERT_TRUE(r.error.empty()) << r.error;
    const auto& row = r.rows[1]; // t = 0.8, front at 0.4
    for (std::size_t j = 0; j < row.u.size(); ++j) {
        const double a = row.u[j] - 0.01, b = row.u[j] + 0.01;
        const bool near = (b > -0.05 && a < 0.05) || (b > 0.35 && a < 0.45);
        EXPECT_EQ(bool(row.counted[j]), !near) << row.u[j];
    }
}

TEST(Compare, TargetMatchesOracle) {
    auto s = small_oracle();
    s.replicas = 1;
    const auto r = compare(s);
    const auto lin = linear_case(s.params(50));
    const auto rho0 = InitialProfile::parse(s.rho0);
    const auto& row = r.rows[0];
    for (std::size_t j = 0; j < row.u.size(); j += 17)
        EXPECT_DOUBLE_EQ(row.target[j], exact_linear_cell_average(rho0, lin, 0.4, row.u[j] - 0.01, row.u[j] + 0.01));
}

TEST(Compare, PdeTargetAgreesWithOracleForLinearRate) {
    auto s = small_oracle();
    s.replicas = 1;
    s.times = {0.6};
    s.du = 0.005;
    s.rho0 = "knots:-1.3:0;-0.7:1;-0.3:1;0:0";
    const auto o = compare(s);
    s.target = Target::pde;
    const auto p = compare(s);
    ASSERT_TRUE(p.error.empty()) << p.error;
    double l1 = 0.0;
    for (std::size_t j = 0; j < o.rows[0].u.size(); ++j) l1 += std::abs(o.rows[0].target[j] - p.rows[0].target[j]) * s.du;
    EXPECT_LE(l1, 0.02);
}

TEST(Compare, ZeroDataHasZeroDistance) {
    for (auto target : {Target::oracle, Target::pde, Target::none}) {
        auto s = small_oracle();
        s.rho0 = "";
        s.target = target;
        s.replicas = 2;
        s.tolerance = 0.0;
        const auto r = compare(s);
        ASSERT_TRUE(r.error.empty()) << r.error;
        for (const auto& row : r.rows) EXPECT_EQ(row.l1, 0.0);
        EXPECT_TRUE(r.pass());
    }
}

TEST(Compare, DistanceDoesNotGrowWithN) {
    auto s = small_oracle();
    s.Ns = {50, 100, 200};
    s.times = {0.8};
    s.ell = 10;
    s.du = 0.005;
    s.replicas = 30;
    const auto r = compare(s);
    ASSERT_TRUE(r.error.empty()) << r.error;
    ASSERT_EQ(r.rows.size(), 3u);
    for (std::size_t k = 0; k + 1 < r.rows.size(); ++k)
        EXPECT_LE(r.rows[k + 1].l1, r.rows[k].l1 + r.rows[k].se + r.rows[k + 1].se) << r.rows[k + 1].N;
}

TEST(Compare, NoTargetAlwaysPasses) {
    auto s = small_oracle();
    s.target = Target::none;
    s.rate = "indicator";
    s.replicas = 2;
    s.tolerance = 0.0;
    s.exclude = 0.0;
    const auto r = compare(s);
    ASSERT_TRUE(r.error.empty()) << r.error;
    EXPECT_TRUE(r.pass());
}

TEST(Compare, ZeroToleranceFails) {
    auto s = small_oracle();
    s.replicas = 2;
    s.tolerance = 0.0;
    const auto r = compare(s);
    EXPECT_FALSE(r.pass());
    for (const auto& row : r.rows) EXPECT_FALSE(row.pass);
}

TEST(Compare, InvalidSpecIsReported) {
    auto s = small_oracle();
    s.rate = "indicator"; // the oracle needs the linear rate
    EXPECT_THROW(s.validate(), std::invalid_argument);
    const auto r = compare(s);
    EXPECT_FALSE(r.error.empty());
    EXPECT_FALSE(r.pass());
}

TEST(Output, CsvAndJson) {
    auto s = small_oracle();
    s.replicas = 2;
    const auto r = compare(s);
    std::ostringstream sum;
    write_summary_csv(sum, {r});
    std::istringstream lines(sum.str());
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "experiment,N,t,l1,se,tolerance,pass");
    std::getline(lines, line);
    EXPECT_EQ(line.rfind("small,50,0.4,", 0), 0u);

    std::ostringstream prof;
    write_profile_csv(prof, r);
    const std::string text = prof.str();
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), 1u + 2u * 200u);

    const auto j = report_json(r);
    EXPECT_EQ(j["spec"]["name"], "small");
    EXPECT_EQ(j["rows"].size(), 2u);
    EXPECT_FALSE(j["rows"][0].contains("wall_seconds"));
    EXPECT_TRUE(report_json(r, true)["rows"][0].contains("wall_seconds"));
    EXPECT_NE(overlay_svg(r).find("<polyline"), std::string::npos);
}

TEST(Suite, Parse) {
    std::istringstream in(R"(# two experiments
[experiment first]
rate = linear
p = 0.75
alpha = 1   # inline comment
beta = 0
N = 50, 100
rho0 = -1:0:1
times = 0.4,0.8
target = oracle
interval = -1.5, 1.5

[experiment second]
rate = bounded:2
target = none
)");
    const auto specs = parse_suite(in);
    ASSERT_EQ(specs.size(), 2u);
    EXPECT_EQ(specs[0].name, "first");
    EXPECT_EQ(specs[0].Ns, (std::vector<std::int64_t>{50, 100}));
    EXPECT_EQ(specs[0].times, (std::vector<double>{0.4, 0.8}));
    EXPECT_EQ(specs[0].u_lo, -1.5);
    EXPECT_EQ(specs[0].u_hi, 1.5);
    EXPECT_EQ(specs[1].rate, "bounded:2");
    EXPECT_EQ(specs[1].target, Target::none);
    std::istringstream empty("# nothing\n\n");
    EXPECT_TRUE(parse_suite(empty).empty());
}

TEST(Suite, ErrorsCarryLineNumbers) {
    auto line_of = [](const std::string& text) {
        std::istringstream in(text);
        try {
            (void)parse_suite(in);
        } catch (const parse_error& e) {
            return e.line();
        }
        return -1;
    };
    EXPECT_EQ(line_of("p = 0.5\n"), 1);
    EXPECT_EQ(line_of("[experiment a]\np = abc\n"), 2);
    EXPECT_EQ(line_of("[experiment a]\n\ncolour = red\n"), 3);
    EXPECT_EQ(line_of("[experiment a]\nrate = bogus\n"), 2);
    EXPECT_EQ(line_of("[experiment a]\n[experiment a]\n"), 2);
    EXPECT_EQ(line_of("[experiment a\n"), 1);
    EXPECT_EQ(line_of("[experiment a]\nN = 10.5\n"), 2);
    EXPECT_EQ(line_of("[experiment a]\ntarget = maybe\n"), 2);
    // cross-field problems point at the section header
    EXPECT_EQ(line_of("# x\n[experiment a]\nrate = indicator\ntarget = oracle\n"), 2);
}

TEST(Suite, RunWritesFilesAndExitCodes) {
    const auto dir = scratch("run");
    std::ostringstream log;
    EXPECT_EQ(run_suite(std::vector<ExperimentSpec>{}, SuiteOptions{dir}, log), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "summary.csv"));

    auto s = small_oracle();
    s.replicas = 2;
    s.tolerance = 0.0;
    std::ostringstream log2;
    EXPECT_EQ(run_suite(std::vector<ExperimentSpec>{s}, SuiteOptions{dir, true}, log2), 1);
    EXPECT_NE(log2.str().find("FAIL small N=50 t=0.4"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(dir / "small.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "small_profiles.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "small.svg"));
    std::filesystem::remove_all(dir);
}
