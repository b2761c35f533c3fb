#include "zrh/coupling.hpp"
#include "zrh/harness.hpp"
#include "zrh/invariant.hpp"
#include "zrh/oracle.hpp"
#include "zrh/pde.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

using namespace zrh;
using json = nlohmann::ordered_json;

namespace {

struct ModelFlags {
    std::string g = "linear";
    double p = 0.75;
    double alpha = 0.0;
    double beta = 0.0;
    std::int64_t N = 100;
    std::string rho0 = "-1:0:1";

    void add(CLI::App* app) {
        app->add_option("--g", g, "rate function: linear | indicator | bounded:c | table:g0,g1,...")->capture_default_str();
        app->add_option("--p", p, "right-jump probability in (1/2, 1]")->capture_default_str();
        app->add_option("--alpha", alpha, "destruction strength at the origin")->capture_default_str();
        app->add_option("--beta", beta, "destruction exponent")->capture_default_str();
        app->add_option("--N", N, "scaling parameter")->capture_default_str();
        app->add_option("--rho0", rho0, "initial profile: a:b:v,... or knots:u:v;u:v;...")->capture_default_str();
    }
    ModelParams params() const {
        const ModelParams prm{p, alpha, beta, N};
        prm.validate();
        return prm;
    }
    RateFunction rate() const { return RateFunction::parse(g); }
    InitialProfile profile() const { return InitialProfile::parse(rho0); }
    json to_json() const { return {{"g", g}, {"p", p}, {"alpha", alpha}, {"beta", beta}, {"N", N}, {"rho0", rho0}}; }
};

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
    file.open(path);
    if (!file) throw std::runtime_error("cannot write " + path);
    return file;
}

/// foo.csv -> foo.json; stdout output puts the JSON on stderr.
void write_sidecar(const std::string& csv_path, const json& j) {
    if (csv_path.empty() || csv_path == "-") {
        std::cerr << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(std::filesystem::path(csv_path).replace_extension(".json"));
    f << j.dump(2) << '\n';
}

void write_json(const std::string& path, const json& j) {
    std::ofstream f;
    open_out(path, f) << j.dump(2) << '\n';
}

std::vector<double> checkpoints(std::vector<double> times, double t_end) {
    if (times.empty()) times.push_back(t_end);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    if (times.front() < 0.0 || times.back() > t_end) throw std::invalid_argument("checkpoints must lie in [0, t-end]");
    return times;
}

Window sim_window(const InitialProfile& rho0, const ModelParams& prm, const RateFunction& rate, double t_end, double margin) {
    return choose_window(rho0.support(), prm, t_end * std::max(1.0, rate.lipschitz()), margin);
}

void write_density_rows(std::ostream& os, std::size_t replica, double t, const DensityProfile& d) {
    for (std::size_t j = 0; j < d.size(); ++j)
        os << replica << ',' << fmt12(t) << ',' << fmt12(d.cell_left(j)) << ',' << fmt12(d.values[j]) << '\n';
}

// --------------------------------------------------------------------------------------------
// simulate

struct SimulateCmd {
    ModelFlags model;
    double t_end = 0.8;
    std::vector<double> times;
    std::int64_t ell = 10;
    std::size_t replicas = 1;
    std::uint64_t seed = 1;
    double margin = 1.0;
    bool closed = false;
    bool timing = false;
    std::string out;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("simulate", "run the particle system and write block-averaged densities");
        model.add(c);
        c->add_option("--t-end", t_end, "final macroscopic time")->capture_default_str();
        c->add_option("--times", times, "checkpoints (default: t-end)")->delimiter(',');
        c->add_option("--ell", ell, "block half-width")->capture_default_str();
        c->add_option("--replicas", replicas)->capture_default_str();
        c->add_option("--seed", seed)->capture_default_str();
        c->add_option("--window-margin", margin, "macroscopic room around the support")->capture_default_str();
        c->add_flag("--closed", closed, "suppress jumps across the window edges");
        c->add_flag("--timing", timing, "record wall-clock time in the JSON sidecar");
        c->add_option("--out", out, "CSV path (default stdout)");
        c->callback([this] { run(); });
    }

    void run() const {
        const auto prm = model.params();
        const auto rate = model.rate();
        const auto rho0 = model.profile();
        const auto obs = checkpoints(times, t_end);
        const Window w = sim_window(rho0, prm, rate, t_end, margin);
        EngineOptions eo;
        eo.boundary = closed ? Boundary::closed : Boundary::open;
        struct Run {
            std::vector<DensityProfile> profiles;
            TrajectoryRecord record;
        };
        const auto started = std::chrono::steady_clock::now();
        const auto runs = parallel_map(replicas, [&](std::size_t r) {
            auto rng = make_stream(seed, r);
            auto init = build_initial(rho0, prm, w, rng);
            EventEngine e(std::move(init), prm, rate, std::move(rng), eo);
            Run o;
            o.record = e.run(t_end, obs, [&](double, const Configuration& c) { o.profiles.push_back(empirical_density(c, prm, ell)); });
            return o;
        });
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

        std::ofstream f;
        auto& os = open_out(out, f);
        os << "replica,t,u,density\n";
        for (std::size_t r = 0; r < runs.size(); ++r)
            for (std::size_t k = 0; k < obs.size(); ++k) write_density_rows(os, r, obs[k], runs[r].profiles[k]);

        json per = json::array();
        for (const auto& o : runs)
            per.push_back({{"destroyed_count", o.record.destroyed},
                           {"exited_left", o.record.exited_left},
                           {"exited_right", o.record.exited_right},
                           {"events", o.record.events},
                           {"initial_mass", o.record.initial_mass},
                           {"final_mass", o.record.final_mass}});
        json j{{"model", model.to_json()}, {"t_end", t_end},   {"times", obs},
               {"ell", ell},               {"replicas", replicas}, {"seed", seed},
               {"window", {w.x_min, w.x_max}}, {"closed", closed}, {"runs", per}};
        if (timing) j["wall_seconds"] = wall;
        write_sidecar(out, j);
    }
};

// --------------------------------------------------------------------------------------------
// couple

ProfileSpec preset_spec(const std::string& name, const ModelParams& prm, double phi_c) {
    if (name == "right-level") return preset_right_level(prm, phi_c);
    if (name == "left-level") return preset_left_level(prm, phi_c);
    if (name == "two-level") return TwoLevel{phi_c};
    throw std::invalid_argument("unknown preset '" + name + "'");
}

Count l1_difference(const Configuration& a, const Configuration& b) {
    Count d = 0;
    for (std::size_t i = 0; i < a.occupation.size(); ++i)
        d += a.occupation[i] > b.occupation[i] ? a.occupation[i] - b.occupation[i] : b.occupation[i] - a.occupation[i];
    return d;
}

struct CoupleCmd {
    ModelFlags model;
    std::string mode = "second-class";
    std::string preset;
    double phi_c = 0.5;
    double t_end = 0.8;
    std::vector<double> times;
    std::int64_t ell = 10;
    std::size_t replicas = 1;
    std::uint64_t seed = 1;
    double margin = 1.0;
    bool closed = false;
    double snapshot_dt = 0.01;
    std::vector<double> bump_box{0.1, 0.7, -0.5, 0.5};
    std::string out;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("couple", "coupled processes: second-class particles, basic or labeled coupling");
        model.add(c);
        c->add_option("--mode", mode)->check(CLI::IsMember({"second-class", "basic", "labeled"}))->capture_default_str();
        c->add_option("--preset", preset, "basic mode: draw the second copy from this invariant profile (closes the window)")
            ->check(CLI::IsMember({"right-level", "left-level", "two-level"}));
        c->add_option("--phi-c", phi_c, "fugacity level of the preset")->capture_default_str();
        c->add_option("--t-end", t_end)->capture_default_str();
        c->add_option("--times", times, "observation times (default: t-end)")->delimiter(',');
        c->add_option("--ell", ell, "block half-width of the entropy functional")->capture_default_str();
        c->add_option("--replicas", replicas)->capture_default_str();
        c->add_option("--seed", seed)->capture_default_str();
        c->add_option("--window-margin", margin)->capture_default_str();
        c->add_flag("--closed", closed);
        c->add_option("--snapshot-dt", snapshot_dt, "time step of the entropy functional quadrature")->capture_default_str();
        c->add_option("--bump", bump_box, "t0,t1,u0,u1 of the entropy test function")->delimiter(',')->expected(4);
        c->add_option("--out", out, "CSV path (default stdout)");
        c->callback([this] { run(); });
    }

    void run() const {
        const auto prm = model.params();
        const auto rate = model.rate();
        const auto rho0 = model.profile();
        const auto obs = checkpoints(times, t_end);
        const Window w = sim_window(rho0, prm, rate, t_end, margin);
        EngineOptions eo;
        eo.boundary = closed ? Boundary::closed : Boundary::open;
        std::ofstream f;
        auto& os = open_out(out, f);
        os << "replica,t,K_t,left_mass,discrepancy,entropy_functional\n";

        if (mode == "second-class") {
            SecondClassOptions so;
            so.boundary = eo.boundary;
            const auto rows = parallel_map(replicas, [&](std::size_t r) {
                auto rng = make_stream(seed, r);
                auto init = build_initial(rho0, prm, w, rng);
                std::vector<std::pair<Count, double>> v;
                run_second_class(init, prm, rate, t_end, std::move(rng), so, obs, [&](double, const SecondClassState& s) {
                    v.emplace_back(s.conversions, second_class_left_mass(s, prm.N));
                });
                return v;
            });
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t k = 0; k < obs.size(); ++k)
                    os << r << ',' << fmt12(obs[k]) << ',' << rows[r][k].first << ',' << fmt12(rows[r][k].second) << ",,\n";
        } else if (mode == "basic") {
            const auto thermo = make_thermo(rate, std::max(8.0, 4.0 * rho0.sup()));
            const auto h = bump(bump_box[0], bump_box[1], bump_box[2], bump_box[3]);
            std::optional<StationaryProfile> prof;
            if (!preset.empty()) {
                prof = build_profile(prm, preset_spec(preset, prm, phi_c), w);
                eo.boundary = Boundary::closed;
            }
            std::vector<double> grid;
            const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t_end / snapshot_dt)));
            for (std::size_t k = 0; k <= steps; ++k) grid.push_back(t_end * static_cast<double>(k) / static_cast<double>(steps));
            grid.insert(grid.end(), obs.begin(), obs.end());
            std::sort(grid.begin(), grid.end());
            grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
            const auto rows = parallel_map(replicas, [&](std::size_t r) {
                auto rng = make_stream(seed, r);
                PairConfiguration pair;
                pair.omega = build_initial(rho0, prm, w, rng);
                pair.varpi = prof ? sample_stationary(*prof, rate, rng) : build_initial(rho0, prm, w, rng);
                BasicCouplingEngine e(std::move(pair), prm, rate, std::move(rng), eo);
                std::vector<std::pair<double, double>> v;
                double integral = 0.0, prev_t = 0.0, prev_f = 0.0;
                bool first = true;
                std::size_t next = 0;
                e.run(t_end, grid, [&](double t, const PairConfiguration& p) {
                    const double fval = micro_entropy_integrand(PairSnapshot{t, p.omega, p.varpi}, h, ell, *thermo, prm);
                    if (!first) integral += 0.5 * (fval + prev_f) * (t - prev_t);
                    first = false;
                    prev_t = t;
                    prev_f = fval;
                    if (next < obs.size() && t == obs[next]) {
                        v.emplace_back(static_cast<double>(l1_difference(p.omega, p.varpi)) / prm.scale(), integral);
                        ++next;
                    }
                });
                return v;
            });
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t k = 0; k < obs.size(); ++k)
                    os << r << ',' << fmt12(obs[k]) << ",,," << fmt12(rows[r][k].first) << ',' << fmt12(rows[r][k].second) << '\n';
        } else {
            const auto rows = parallel_map(replicas, [&](std::size_t r) {
                auto rng = make_stream(seed, r);
                auto init = build_initial(rho0, prm, w, rng);
                return run_labeled_coupling(init, prm, rate, t_end, std::move(rng), eo).discrepancy;
            });
            for (std::size_t r = 0; r < rows.size(); ++r)
                os << r << ',' << fmt12(t_end) << ",,," << fmt12(static_cast<double>(rows[r]) / prm.scale()) << ",\n";
        }
    }
};

// --------------------------------------------------------------------------------------------
// invariant

struct InvariantCmd {
    ModelFlags model;
    std::string preset;
    std::optional<double> c1, c2, m_plus;
    double phi_c = 0.5;
    std::int64_t x_min = -100, x_max = 100;
    bool validate = false;
    double t_end = 1.0;
    std::size_t replicas = 200;
    std::uint64_t seed = 1;
    std::vector<std::int64_t> sites{-5, -1, 0, 1, 5};
    std::string out;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("invariant", "build and check an inhomogeneous invariant product measure");
        model.add(c);
        auto* pr = c->add_option("--preset", preset)->check(CLI::IsMember({"right-level", "left-level"}));
        auto* o1 = c->add_option("--c1", c1, "left geometric coefficient");
        auto* o2 = c->add_option("--c2", c2, "left constant");
        auto* mp = c->add_option("--m-plus", m_plus, "two-level profile at p = 1: m = m+ (1 + alpha N^beta) left of 0, m+ right");
        o1->needs(o2);
        o2->needs(o1);
        pr->excludes(o1)->excludes(mp);
        mp->excludes(o1);
        c->add_option("--phi-c", phi_c, "fugacity level of the preset")->capture_default_str();
        c->add_option("--x-min", x_min)->capture_default_str();
        c->add_option("--x-max", x_max)->capture_default_str();
        c->add_flag("--validate", validate, "run the stationarity test");
        c->add_option("--t-end", t_end)->capture_default_str();
        c->add_option("--replicas", replicas)->capture_default_str();
        c->add_option("--seed", seed)->capture_default_str();
        c->add_option("--sites", sites, "sites checked by --validate")->delimiter(',');
        c->add_option("--out", out, "JSON path (default stdout)");
        c->callback([this] { run(); });
    }

    void run() const {
        const auto prm = model.params();
        const auto rate = model.rate();
        ProfileSpec spec;
        if (!preset.empty()) spec = preset_spec(preset, prm, phi_c);
        else if (m_plus) spec = TwoLevel{*m_plus};
        else if (c1) spec = Geometric{*c1, *c2};
        else throw CLI::ValidationError("invariant", "give --preset, --m-plus or --c1/--c2");
        const auto prof = build_profile(prm, spec, Window{x_min, x_max});
        json j{{"model", model.to_json()}, {"window", {x_min, x_max}}, {"max_residual", prof.max_residual()}};
        if (const auto& c = prof.coefficients())
            j["coefficients"] = {{"c1", c->c1}, {"c2", c->c2}, {"c3", c->c3}, {"c4", c->c4}};
        j["m"] = std::vector<double>(prof.values().begin(), prof.values().end());
        if (validate) {
            StationarityOptions so;
            so.seed = seed;
            so.sites = sites;
            const auto rep = stationarity_test(prof, rate, t_end, replicas, so);
            json s = json::array();
            for (const auto& site : rep.sites)
                s.push_back({{"x", site.x},
                             {"m", site.m},
                             {"expected_density", site.expected_density},
                             {"density", {site.density.mean, site.density.se}},
                             {"jump_rate", {site.jump_rate.mean, site.jump_rate.se}},
                             {"pass", site.pass}});
            j["stationarity"] = {{"t_end", t_end}, {"replicas", replicas}, {"pass", rep.pass}, {"sites", s}};
        }
        write_json(out, j);
    }
};

// --------------------------------------------------------------------------------------------
// pde

json kruzhkov_json(const KruzhkovReport& r) {
    std::size_t failed = 0;
    for (const auto& e : r.entries) failed += e.pass ? 0 : 1;
    json j{{"pass", r.pass}, {"M", r.M}, {"entries", r.entries.size()}, {"failed", failed}, {"worst_margin", r.worst_margin}};
    if (r.smallest_passing_M) j["smallest_passing_M"] = *r.smallest_passing_M;
    return j;
}

/// Cells of g from index j0 on, as a half-line grid starting at 0.
PdeGrid right_part(const PdeGrid& g, std::size_t j0) {
    PdeGrid r = g;
    r.u_min = g.u_min + g.du * static_cast<double>(j0);
    for (auto& s : r.slices) s.erase(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(j0));
    return r;
}

struct PdeCmd {
    ModelFlags model;
    double du = 1.0 / 200.0;
    double T = 1.0;
    std::optional<double> u_min, u_max;
    std::vector<double> times;
    bool check = false;
    std::string out;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("pde", "solve the limiting conservation law with a Godunov scheme");
        model.add(c);
        c->add_option("--du", du, "cell width")->capture_default_str();
        c->add_option("--T", T, "final time")->capture_default_str();
        c->add_option("--u-min", u_min, "left domain edge (default: from the data)");
        c->add_option("--u-max", u_max, "right domain edge (default: from the data)");
        c->add_option("--times", times, "output times (default: T)")->delimiter(',');
        c->add_flag("--check", check, "run the entropy inequality check");
        c->add_option("--out", out, "CSV path (default stdout)");
        c->callback([this] { run(); });
    }

    void run() const {
        const auto prm = model.params();
        const auto rate = model.rate();
        const auto rho0 = model.profile();
        const auto obs = checkpoints(times, T);
        const auto thermo = make_thermo(rate, std::max(4.0, 2.0 * rho0.sup()));
        const FluxModel flux(thermo, prm.p);
        const auto [lo, hi] = rho0.support();
        PdeOptions opt;
        opt.du = du;
        auto snap = [&](double u) { return du * std::round(u / du); };
        opt.u_min = u_min.value_or(snap(std::min(lo, 0.0) - 1.0));
        opt.u_max = u_max.value_or(snap(std::max(hi, 0.0) + flux.lipschitz() * T + 1.0));
        const auto g = compose_theorem_solution(prm.beta, rho0, prm, flux, T, opt);

        std::ofstream f;
        auto& os = open_out(out, f);
        os << "t,u,rho\n";
        for (double t : obs) {
            const auto d = g.profile_at(t);
            for (std::size_t j = 0; j < d.size(); ++j) os << fmt12(t) << ',' << fmt12(d.cell_center(j)) << ',' << fmt12(d.values[j]) << '\n';
        }

        json j{{"model", model.to_json()},
               {"du", du},
               {"dt", g.dt},
               {"T", T},
               {"domain", {g.u_min, g.u_max()}},
               {"mass_defect", g.mass_defect()},
               {"max_principle_violations", g.max_principle_violations}};
        if (check) {
            const double top = std::max(rho0.sup(), 1e-3);
            const bool split = prm.alpha > 0.0 && prm.beta >= 0.0;
            if (!split) {
                j["check"] = kruzhkov_json(
                    kruzhkov_check(g, flux, WholeLine{}, default_test_family(g, WholeLine{}), default_c_values(top), 0.0));
            } else {
                // rho_L solves the whole-line problem; rho_R the half-line problem with its own boundary
                const auto whole = solve_whole_line(rho0, flux, T, opt);
                j["check_left"] = kruzhkov_json(
                    kruzhkov_check(whole, flux, WholeLine{}, default_test_family(whole, WholeLine{}), default_c_values(top), 0.0));
                const auto right = right_part(g, detail::cell_count(opt.u_min, 0.0, du));
                BoundarySpec b = ZeroFlux{};
                if (prm.beta == 0.0) {
                    const auto rb = g.boundary;
                    const double dt = g.dt;
                    b = DirichletDensity{[rb, dt](double t) {
                        const auto s = static_cast<std::size_t>(std::llround(t / dt));
                        return rb[std::min(s, rb.size() - 1)];
                    }};
                }
                const double M = prm.beta == 0.0 ? default_boundary_constant(flux, prm.alpha) : 0.0;
                j["check_right"] = kruzhkov_json(kruzhkov_check(right, flux, b, default_test_family(right, b), default_c_values(top), M,
                                                                prm.beta == 0.0 ? boundary_constant_grid(M) : std::vector<double>{}));
            }
        }
        write_sidecar(out, j);
    }
};

// --------------------------------------------------------------------------------------------
// oracle

struct OracleCmd {
    ModelFlags model;
    bool exact = false, ode = false, dual = false, killprob = false, correlation = false;
    double t_end = 0.8;
    std::vector<double> times;
    double du = 0.01;
    double u_min = -2.0, u_max = 2.0;
    bool rk4 = false;
    double margin = 1.0;
    std::int64_t x_min = -100, x_max = 100, stride = 10;
    std::size_t replicas = 10000;
    std::uint64_t seed = 1;
    std::int64_t start = 0;
    std::optional<double> horizon;
    std::int64_t min_separation = 0;
    double band = 4.0;
    std::string out;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("oracle", "closed forms and independent estimators for the linear rate");
        model.add(c);
        auto* g = c->add_option_group("kind", "exactly one of");
        g->add_flag("--exact", exact, "explicit solution, cell averages on [u-min, u-max]");
        g->add_flag("--ode", ode, "per-site mean density from the linear ODE");
        g->add_flag("--dual", dual, "per-site mean density from killed random walks");
        g->add_flag("--killprob", killprob, "fraction of dual walks killed at the origin");
        g->add_flag("--correlation", correlation, "two-point covariances of the particle system");
        g->require_option(1);
        c->add_option("--t-end", t_end)->capture_default_str();
        c->add_option("--times", times, "checkpoints (default: t-end)")->delimiter(',');
        c->add_option("--du", du, "cell width for --exact")->capture_default_str();
        c->add_option("--u-min", u_min)->capture_default_str();
        c->add_option("--u-max", u_max)->capture_default_str();
        c->add_flag("--rk4", rk4, "fourth-order steps for --ode (default Euler)");
        c->add_option("--window-margin", margin)->capture_default_str();
        c->add_option("--x-min", x_min, "first site for --dual / --correlation")->capture_default_str();
        c->add_option("--x-max", x_max, "last site for --dual / --correlation")->capture_default_str();
        c->add_option("--stride", stride, "site spacing for --dual / --correlation")->capture_default_str();
        c->add_option("--replicas", replicas)->capture_default_str();
        c->add_option("--seed", seed)->capture_default_str();
        c->add_option("--start", start, "start site for --killprob")->capture_default_str();
        c->add_option("--horizon", horizon, "time horizon for --killprob");
        c->add_option("--min-sep", min_separation, "smallest |x - y| for --correlation (default 0.2 N)");
        c->add_option("--band", band, "SE multiple for --correlation")->capture_default_str();
        c->add_option("--out", out, "output path (default stdout)");
        c->callback([this] { run(); });
    }

    std::vector<std::int64_t> site_list() const {
        if (stride < 1 || x_max < x_min) throw std::invalid_argument("need x-min <= x-max and stride >= 1");
        std::vector<std::int64_t> v;
        for (std::int64_t x = x_min; x <= x_max; x += stride) v.push_back(x);
        return v;
    }

    void run() const {
        const auto prm = model.params();
        const auto rho0 = model.profile();
        const auto obs = checkpoints(times, t_end);
        if (killprob) {
            const auto ex = killing_probability_experiment(prm, start, horizon, replicas, seed);
            write_json(out, {{"model", model.to_json()},
                             {"start", start},
                             {"walks", replicas},
                             {"seed", seed},
                             {"fraction", ex.fraction.mean},
                             {"se", ex.fraction.se},
                             {"expected", ex.expected},
                             {"undecided", ex.undecided},
                             {"horizon", ex.horizon},
                             {"escape_sites", ex.escape_sites}});
            return;
        }
        std::ofstream f;
        auto& os = open_out(out, f);
        const double N = prm.scale();
        if (exact) {
            if (!model.rate().is_linear()) throw std::invalid_argument("the explicit solution needs the linear rate");
            const auto lin = linear_case(prm);
            const auto n = static_cast<std::size_t>(std::llround((u_max - u_min) / du));
            os << "replica,t,u,density\n";
            for (double t : obs) write_density_rows(os, 0, t, exact_linear_profile(rho0, lin, t, u_min, du, n));
        } else if (ode) {
            OdeOptions oo;
            oo.method = rk4 ? OdeMethod::rk4 : OdeMethod::euler;
            const auto w = choose_window(rho0.support(), prm, t_end, margin);
            os << "replica,t,u,density\n";
            for (double t : obs) write_density_rows(os, 0, t, integrate_density_ode(rho0, prm, w, t, oo).profile(prm.N));
        } else if (dual) {
            os << "replica,t,u,density,se\n";
            for (double t : obs)
                for (auto x : site_list()) {
                    const auto d = dual_rw_estimate(x, t, prm, rho0, replicas, seed);
                    os << 0 << ',' << fmt12(t) << ',' << fmt12(static_cast<double>(x) / N) << ',' << fmt12(d.mean) << ','
                       << fmt12(d.se) << '\n';
                }
        } else {
            const auto rate = model.rate();
            const Window w = sim_window(rho0, prm, rate, t_end, margin);
            const auto samples = sample_occupations(rho0, prm, rate, w, t_end, replicas, seed);
            std::vector<std::int64_t> sites;
            for (auto x : site_list())
                if (w.contains(x)) sites.push_back(x);
            const std::int64_t sep = min_separation > 0 ? min_separation : static_cast<std::int64_t>(std::ceil(0.2 * N));
            os << "x,y,covariance,se\n";
            for (std::size_t a = 0; a < sites.size(); ++a)
                for (std::size_t b = a + 1; b < sites.size(); ++b) {
                    if (std::llabs(sites[a] - sites[b]) < sep) continue;
                    const auto c = correlation_field(samples, w.index(sites[a]), w.index(sites[b]));
                    os << sites[a] << ',' << sites[b] << ',' << fmt12(c.mean) << ',' << fmt12(c.se) << '\n';
                }
            const auto sc = correlation_scan(samples, w, sites, sep, band);
            write_sidecar(out, {{"model", model.to_json()},
                                {"t", t_end},
                                {"replicas", replicas},
                                {"pairs", sc.pairs},
                                {"exceed", sc.exceed},
                                {"band", band},
                                {"max_abs", sc.max_abs},
                                {"max_z", sc.max_z},
                                {"worst", {sc.worst_x, sc.worst_y}}});
        }
    }
};

// --------------------------------------------------------------------------------------------
// compare

/// Replica-averaged density per time from a replica,t,u,density CSV; u is the left cell edge.
std::map<double, DensityProfile> read_density_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ": empty file", 1);
    std::vector<std::string> head;
    {
        std::stringstream ss(line);
        std::string h;
        while (std::getline(ss, h, ',')) head.push_back(h);
    }
    auto col = [&](const std::string& name) {
        const auto it = std::find(head.begin(), head.end(), name);
        if (it == head.end()) throw parse_error(path + ": missing column '" + name + "'", 1);
        return static_cast<std::size_t>(it - head.begin());
    };
    const std::size_t ct = col("t"), cu = col("u"), cd = col("density");
    std::map<double, std::map<double, RunningStats>> acc;
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (cells.size() < head.size()) throw parse_error(path + ": short row", n);
        try {
            acc[std::stod(cells[ct])][std::stod(cells[cu])].add(std::stod(cells[cd]));
        } catch (const std::invalid_argument&) {
            throw parse_error(path + ": not a number", n);
        }
    }
    std::map<double, DensityProfile> out;
    for (const auto& [t, by_u] : acc) {
        if (by_u.size() < 2) throw parse_error(path + ": need at least two cells per time");
        std::vector<double> us, vs;
        for (const auto& [u, s] : by_u) {
            us.push_back(u);
            vs.push_back(s.mean());
        }
        const double h = (us.back() - us.front()) / static_cast<double>(us.size() - 1);
        for (std::size_t k = 1; k < us.size(); ++k)
            if (std::abs(us[k] - us[k - 1] - h) > 1e-6 * h) throw parse_error(path + ": cells are not uniformly spaced");
        out.emplace(t, DensityProfile(us.front(), h, std::move(vs)));
    }
    return out;
}

double profile_cell_average(const DensityProfile& d, double a, double b) {
    const double lo = std::max(a, d.u_min), hi = std::min(b, d.u_max());
    if (!(hi > lo)) return 0.0;
    return d.cell_average(lo, hi) * (hi - lo) / (b - a);
}

struct CompareCmd {
    std::string suite, experiment;
    std::string empirical, target;
    std::vector<double> interval{-2.0, 2.0};
    double du = 0.01;
    double exclude = 0.0;
    double p = 0.75;
    double tolerance = 0.1;
    std::string out = "compare_out";
    bool plot = false;
    bool timing = false;
    int exit_code = 0;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("compare", "L1 distance between an empirical density and a target");
        auto* s = c->add_option("--suite", suite, "suite file holding the experiment");
        c->add_option("--experiment", experiment, "experiment name inside --suite")->needs(s);
        auto* e = c->add_option("--empirical", empirical, "CSV with replica,t,u,density");
        auto* t = c->add_option("--target", target, "CSV with t,u,density (oracle output)");
        e->needs(t)->excludes(s);
        t->needs(e);
        c->add_option("--interval", interval, "a,b")->delimiter(',')->expected(2);
        c->add_option("--du", du, "comparison cell width")->capture_default_str();
        c->add_option("--exclude", exclude, "half-width of the bands around u = 0 and u = (2p-1)t")->capture_default_str();
        c->add_option("--p", p, "sets the moving band for --exclude")->capture_default_str();
        c->add_option("--tolerance", tolerance)->capture_default_str();
        c->add_option("--out", out, "output directory (suite mode)")->capture_default_str();
        c->add_flag("--plot", plot, "write an SVG overlay (suite mode)");
        c->add_flag("--timing", timing, "record wall-clock time in the JSON (suite mode)");
        c->callback([this] { run(); });
    }

    void run() {
        if (!suite.empty()) {
            const auto specs = parse_suite_file(suite);
            std::vector<ExperimentSpec> chosen;
            for (const auto& sp : specs)
                if (experiment.empty() || sp.name == experiment) chosen.push_back(sp);
            if (chosen.empty()) throw std::invalid_argument("no experiment '" + experiment + "' in " + suite);
            exit_code = run_suite(chosen, SuiteOptions{out, plot, timing}, std::cout);
            return;
        }
        if (empirical.empty()) throw CLI::ValidationError("compare", "give --suite or --empirical/--target");
        const auto emp = read_density_csv(empirical);
        const auto tgt = read_density_csv(target);
        const auto n = static_cast<std::size_t>(std::llround((interval[1] - interval[0]) / du));
        std::cout << "t,l1,tolerance,pass\n";
        for (const auto& [t, d] : emp) {
            const auto it = std::find_if(tgt.begin(), tgt.end(), [&](const auto& kv) { return std::abs(kv.first - t) < 1e-9; });
            if (it == tgt.end()) throw std::invalid_argument("target has no profile at t = " + fmt12(t));
            const double front = (2.0 * p - 1.0) * t;
            double l1 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double a = interval[0] + du * static_cast<double>(j), b = a + du;
                if (exclude > 0.0 && ((b > -exclude && a < exclude) || (b > front - exclude && a < front + exclude))) continue;
                l1 += std::abs(profile_cell_average(d, a, b) - profile_cell_average(it->second, a, b)) * du;
            }
            const bool pass = l1 <= tolerance;
            if (!pass) exit_code = 1;
            std::cout << fmt12(t) << ',' << fmt12(l1) << ',' << fmt12(tolerance) << ',' << (pass ? "pass" : "fail") << '\n';
        }
    }
};

// --------------------------------------------------------------------------------------------
// suite

struct SuiteCmd {
    std::string path;
    std::string out = "suite_out";
    bool plot = false;
    bool timing = false;
    int exit_code = 0;

    void add(CLI::App& root) {
        auto* c = root.add_subcommand("suite", "run every experiment of a suite file");
        c->add_option("path", path, "suite file")->required()->check(CLI::ExistingFile);
        c->add_option("--out", out, "output directory")->capture_default_str();
        c->add_flag("--plot", plot, "write SVG overlays");
        c->add_flag("--timing", timing, "record wall-clock time in the JSON reports");
        c->callback([this] { exit_code = run_suite(path, SuiteOptions{out, plot, timing}, std::cout); });
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"zero-range hydrodynamics toolkit"};
    app.require_subcommand(1);
    SimulateCmd simulate;
    CoupleCmd couple;
    InvariantCmd invariant;
    PdeCmd pde;
    OracleCmd oracle;
    CompareCmd compare_cmd;
    SuiteCmd suite;
    simulate.add(app);
    couple.add(app);
    invariant.add(app);
    pde.add(app);
    oracle.add(app);
    compare_cmd.add(app);
    suite.add(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const parse_error& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return std::max(compare_cmd.exit_code, suite.exit_code);
}
