#pragma once

#include "zrh/errors.hpp"
#include "zrh/oracle.hpp"
#include "zrh/parallel.hpp"
#include "zrh/pde.hpp"
#include "zrh/profile.hpp"
#include "zrh/rate_function.hpp"
#include "zrh/sim.hpp"
#include "zrh/stats.hpp"
#include "zrh/thermo.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace zrh {

/// 12 significant digits, the fixed decimal format of every CSV the harness writes.
inline std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

enum class Target { pde, oracle, none };

inline std::string to_string(Target t) {
    switch (t) {
    case Target::pde: return "pde";
    case Target::oracle: return "oracle";
    default: return "none";
    }
}

inline Target parse_target(const std::string& s) {
    if (s == "pde") return Target::pde;
    if (s == "oracle") return Target::oracle;
    if (s == "none") return Target::none;
    throw parse_error("target must be pde, oracle or none, got '" + s + "'");
}

struct ExperimentSpec {
    std::string name = "experiment";
    std::string rate = "linear";
    double p = 0.75;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<std::int64_t> Ns{100};
    std::string rho0 = "-1:0:1";
    std::vector<double> times{0.8};
    std::int64_t ell = 10;
    std::size_t replicas = 20;
    std::uint64_t seed = 1;
    /// Cell width of the comparison grid (and of the PDE solve).
    double du = 0.01;
    Target target = Target::oracle;
    double tolerance = 0.1;
    double u_lo = -2.0;
    double u_hi = 2.0;
    /// Half-width of the bands around u = 0 and u = (2p-1)t left out of the distance; 0 keeps all.
    double exclude = 0.0;
    /// Extra macroscopic room on both sides of the simulation window.
    double margin = 1.0;

    ModelParams params(std::int64_t N) const { return ModelParams{p, alpha, beta, N}; }

    void validate() const {
        if (name.empty()) throw std::invalid_argument("experiment needs a name");
        const auto g = RateFunction::parse(rate);
        for (auto N : Ns) params(N).validate();
        if (Ns.empty()) throw std::invalid_argument("experiment needs at least one N");
        (void)InitialProfile::parse(rho0);
        if (times.empty()) throw std::invalid_argument("experiment needs at least one time");
        for (double t : times)
            if (!(t >= 0.0)) throw std::invalid_argument("times must be >= 0");
        if (ell < 0) throw std::invalid_argument("ell must be >= 0");
        if (replicas == 0) throw std::invalid_argument("replicas must be >= 1");
        if (!(du > 0.0)) throw std::invalid_argument("du must be positive");
        if (!(u_hi > u_lo)) throw std::invalid_argument("comparison interval is empty");
        if (!(tolerance >= 0.0)) throw std::invalid_argument("tolerance must be >= 0");
        if (!(exclude >= 0.0)) throw std::invalid_argument("exclude must be >= 0");
        if (target == Target::oracle && !g.is_linear()) throw std::invalid_argument("the oracle target needs the linear rate");
        const double cells = (u_hi - u_lo) / du;
        if (std::abs(cells - std::round(cells)) > 1e-6) throw std::invalid_argument("interval is not a whole number of cells");
    }
};

inline nlohmann::ordered_json to_json(const ExperimentSpec& s) {
    return {{"name", s.name},   {"rate", s.rate},           {"p", s.p},
            {"alpha", s.alpha}, {"beta", s.beta},           {"N", s.Ns},
            {"rho0", s.rho0},   {"times", s.times},         {"ell", s.ell},
            {"replicas", s.replicas}, {"seed", s.seed},     {"du", s.du},
            {"target", to_string(s.target)}, {"tolerance", s.tolerance},
            {"interval", {s.u_lo, s.u_hi}},  {"exclude", s.exclude}, {"margin", s.margin}};
}

struct ComparisonRow {
    std::int64_t N = 0;
    double t = 0.0;
    double l1 = 0.0;
    /// int SE(replica mean density) du over the counted cells.
    double se = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    double wall_seconds = 0.0;
    /// Comparison grid, replica-averaged empirical density, target, and whether the cell counts.
    std::vector<double> u;
    std::vector<double> empirical;
    std::vector<double> target;
    std::vector<char> counted;
};

struct ComparisonReport {
    ExperimentSpec spec;
    std::vector<ComparisonRow> rows;
    std::string error;

    bool pass() const noexcept {
        if (!error.empty()) return false;
        return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
    }
};

namespace detail {

inline std::vector<double> target_profile(const ExperimentSpec& s, const ModelParams& prm, const InitialProfile& rho0, double t,
                                          const ThermoTablePtr& thermo) {
    const auto n = static_cast<std::size_t>(std::llround((s.u_hi - s.u_lo) / s.du));
    std::vector<double> out(n, 0.0);
    if (s.target == Target::none) return out;
    if (s.target == Target::oracle) {
        const auto lin = linear_case(prm);
        for (std::size_t j = 0; j < n; ++j) {
            const double a = s.u_lo + s.du * static_cast<double>(j);
            out[j] = exact_linear_cell_average(rho0, lin, t, a, a + s.du);
        }
        return out;
    }
    // PDE on a grid aligned with the comparison cells and wide enough for the data
    const auto [lo, hi] = rho0.support();
    PdeOptions opt;
    opt.du = s.du;
    const double left = std::min({s.u_lo, lo - 0.5, -s.du});
    const double right = std::max({s.u_hi, hi + prm.drift() * thermo->rate().lipschitz() * t + 0.5, s.du});
    opt.u_min = s.u_lo - s.du * std::ceil((s.u_lo - left) / s.du - 1e-9);
    opt.u_max = s.u_hi + s.du * std::ceil((right - s.u_hi) / s.du - 1e-9);
    if (std::abs(std::round(opt.u_min / s.du) * s.du - opt.u_min) > 1e-9)
        throw std::invalid_argument("u = 0 must be a cell edge of the comparison grid");
    const FluxModel flux(thermo, prm.p);
    const auto g = compose_theorem_solution(prm.beta, rho0, prm, flux, t, opt);
    const DensityProfile last(g.u_min, g.du, g.slices.back());
    for (std::size_t j = 0; j < n; ++j) {
        const double a = s.u_lo + s.du * static_cast<double>(j);
        out[j] = last.cell_average(a, a + s.du);
    }
    return out;
}

} // namespace detail

/// Replica-averaged block densities against the target at every (N, t). Failures inside the run
/// are recorded in the report rather than thrown.
inline ComparisonReport compare(const ExperimentSpec& spec) {
    ComparisonReport rep;
    rep.spec = spec;
    try {
        spec.validate();
        const auto rate = RateFunction::parse(spec.rate);
        const auto rho0 = InitialProfile::parse(spec.rho0);
        std::vector<double> times = spec.times;
        std::sort(times.begin(), times.end());
        const double t_max = times.back();
        const auto n = static_cast<std::size_t>(std::llround((spec.u_hi - spec.u_lo) / spec.du));
        ThermoTablePtr thermo;
        if (spec.target == Target::pde) thermo = make_thermo(rate, std::max(4.0, 2.0 * rho0.sup()));

        for (std::size_t ni = 0; ni < spec.Ns.size(); ++ni) {
            const auto started = std::chrono::steady_clock::now();
            const auto prm = spec.params(spec.Ns[ni]);
            const double N = prm.scale();
            auto sup = rho0.support();
            Window w = choose_window(sup, prm, t_max * std::max(1.0, rate.lipschitz()), spec.margin);
            w.x_min = std::min(w.x_min, static_cast<std::int64_t>(std::floor(spec.u_lo * N)) - spec.ell - 1);
            w.x_max = std::max(w.x_max, static_cast<std::int64_t>(std::ceil(spec.u_hi * N)) + spec.ell + 1);
            // per replica: one row of comparison cells per checkpoint
            const auto per_replica = parallel_map(spec.replicas, [&](std::size_t r) {
                auto rng = make_stream(spec.seed, ni * 1'000'000 + r);
                auto init = build_initial(rho0, prm, w, rng);
                EventEngine e(std::move(init), prm, rate, std::move(rng));
                std::vector<std::vector<double>> rows;
                e.run(t_max, times, [&](double, const Configuration& c) {
                    const auto emp = empirical_density(c, prm, spec.ell);
                    std::vector<double> v(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        const double a = spec.u_lo + spec.du * static_cast<double>(j);
                        v[j] = emp.cell_average(a, a + spec.du);
                    }
                    rows.push_back(std::move(v));
                });
                return rows;
            });
            const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

            for (std::size_t k = 0; k < times.size(); ++k) {
                ComparisonRow row;
                row.N = spec.Ns[ni];
                row.t = times[k];
                row.tolerance = spec.tolerance;
                row.wall_seconds = elapsed;
                row.target = detail::target_profile(spec, prm, rho0, times[k], thermo);
                row.u.resize(n);
                row.empirical.assign(n, 0.0);
                row.counted.assign(n, 1);
                const double front = prm.drift() * times[k];
                for (std::size_t j = 0; j < n; ++j) {
                    const double a = spec.u_lo + spec.du * static_cast<double>(j), b = a + spec.du;
                    row.u[j] = 0.5 * (a + b);
                    if (spec.exclude > 0.0)
                        for (double s : {0.0, front})
                            if (b > s - spec.exclude && a < s + spec.exclude) row.counted[j] = 0;
                    RunningStats st;
                    for (const auto& rr : per_replica) st.add(rr[k][j]);
                    row.empirical[j] = st.mean();
                    if (row.counted[j] && spec.target != Target::none) {
                        row.l1 += std::abs(st.mean() - row.target[j]) * spec.du;
                        row.se += st.se() * spec.du;
                    }
                }
                row.pass = row.l1 <= spec.tolerance;
                rep.rows.push_back(std::move(row));
            }
        }
    } catch (const std::exception& e) {
        rep.error = e.what();
    }
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Output

inline void write_summary_csv(std::ostream& os, const std::vector<ComparisonReport>& reports) {
    os << "experiment,N,t,l1,se,tolerance,pass\n";
    for (const auto& r : reports) {
        if (!r.error.empty()) {
            os << r.spec.name << ",,,,,," << "error" << "\n";
            continue;
        }
        for (const auto& row : r.rows)
            os << r.spec.name << ',' << row.N << ',' << fmt12(row.t) << ',' << fmt12(row.l1) << ',' << fmt12(row.se) << ','
               << fmt12(row.tolerance) << ',' << (row.pass ? "pass" : "fail") << '\n';
    }
}

inline void write_profile_csv(std::ostream& os, const ComparisonReport& r) {
    os << "N,t,u,empirical,target,counted\n";
    for (const auto& row : r.rows)
        for (std::size_t j = 0; j < row.u.size(); ++j)
            os << row.N << ',' << fmt12(row.t) << ',' << fmt12(row.u[j]) << ',' << fmt12(row.empirical[j]) << ','
               << fmt12(row.target[j]) << ',' << int(row.counted[j]) << '\n';
}

/// Wall-clock figures are left out unless asked for, so reruns compare byte for byte.
inline nlohmann::ordered_json report_json(const ComparisonReport& r, bool timing = false) {
    nlohmann::ordered_json j;
    j["spec"] = to_json(r.spec);
    j["pass"] = r.pass();
    if (!r.error.empty()) j["error"] = r.error;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows) {
        nlohmann::ordered_json o{{"N", row.N}, {"t", row.t}, {"l1", row.l1}, {"se", row.se}, {"tolerance", row.tolerance},
                                 {"pass", row.pass}};
        if (timing) o["wall_seconds"] = row.wall_seconds;
        rows.push_back(std::move(o));
    }
    j["rows"] = std::move(rows);
    return j;
}

/// One panel per (N, t): empirical density in blue over the target in black.
inline std::string overlay_svg(const ComparisonReport& r) {
    const double W = 640, H = 240, pad = 30;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H * static_cast<double>(r.rows.size())
       << "\">\n";
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
        const auto& row = r.rows[k];
        double top = 1e-12;
        for (std::size_t j = 0; j < row.u.size(); ++j) top = std::max({top, row.empirical[j], row.target[j]});
        const double y0 = H * static_cast<double>(k);
        auto px = [&](double u) { return pad + (u - r.spec.u_lo) / (r.spec.u_hi - r.spec.u_lo) * (W - 2 * pad); };
        auto py = [&](double v) { return y0 + H - pad - v / (1.1 * top) * (H - 2 * pad); };
        auto line = [&](const std::vector<double>& v, const char* colour) {
            os << "<polyline fill=\"none\" stroke=\"" << colour << "\" points=\"";
            for (std::size_t j = 0; j < v.size(); ++j) os << fmt12(px(row.u[j])) << ',' << fmt12(py(v[j])) << ' ';
            os << "\"/>\n";
        };
        os << "<text x=\"" << pad << "\" y=\"" << y0 + 18 << "\" font-size=\"12\">" << r.spec.name << " N=" << row.N
           << " t=" << fmt12(row.t) << " L1=" << fmt12(row.l1) << "</text>\n";
        os << "<line x1=\"" << pad << "\" y1=\"" << py(0) << "\" x2=\"" << W - pad << "\" y2=\"" << py(0)
           << "\" stroke=\"#999\"/>\n";
        line(row.target, "black");
        line(row.empirical, "steelblue");
    }
    os << "</svg>\n";
    return os.str();
}

/// Writes <name>.json, <name>_profiles.csv and optionally <name>.svg into dir.
inline void write_report_files(const ComparisonReport& r, const std::filesystem::path& dir, bool plot, bool timing = false) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / (r.spec.name + ".json")) << report_json(r, timing).dump(2) << '\n';
    std::ofstream csv(dir / (r.spec.name + "_profiles.csv"));
    write_profile_csv(csv, r);
    if (plot) std::ofstream(dir / (r.spec.name + ".svg")) << overlay_svg(r);
}

// ---------------------------------------------------------------------------------------------
// Suite files
//
//   # comment
//   [experiment name]
//   key = value
//
// Lists are comma separated. Keys: rate p alpha beta N rho0 times ell replicas seed du target
// tolerance interval exclude margin.

namespace detail {

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw parse_error("expected a number, got '" + v + "'", line);
    }
}

inline std::vector<double> parse_list(const std::string& v, int line) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number(trim(item), line));
    if (out.empty()) throw parse_error("empty list", line);
    return out;
}

inline std::int64_t parse_integer(const std::string& v, int line) {
    const double d = parse_number(v, line);
    if (d != std::floor(d)) throw parse_error("expected an integer, got '" + v + "'", line);
    return static_cast<std::int64_t>(d);
}

inline void assign(ExperimentSpec& s, const std::string& key, const std::string& v, int line) {
    if (key == "rate") {
        try {
            (void)RateFunction::parse(v);
        } catch (const std::exception& e) {
            throw parse_error(e.what(), line);
        }
        s.rate = v;
    } else if (key == "p") {
        s.p = parse_number(v, line);
    } else if (key == "alpha") {
        s.alpha = parse_number(v, line);
    } else if (key == "beta") {
        s.beta = parse_number(v, line);
    } else if (key == "N") {
        s.Ns.clear();
        for (double d : parse_list(v, line)) s.Ns.push_back(parse_integer(fmt12(d), line));
    } else if (key == "rho0") {
        try {
            (void)InitialProfile::parse(v);
        } catch (const std::exception& e) {
            throw parse_error(e.what(), line);
        }
        s.rho0 = v;
    } else if (key == "times") {
        s.times = parse_list(v, line);
    } else if (key == "ell") {
        s.ell = parse_integer(v, line);
    } else if (key == "replicas") {
        s.replicas = static_cast<std::size_t>(parse_integer(v, line));
    } else if (key == "seed") {
        s.seed = static_cast<std::uint64_t>(parse_integer(v, line));
    } else if (key == "du") {
        s.du = parse_number(v, line);
    } else if (key == "target") {
        try {
            s.target = parse_target(v);
        } catch (const parse_error& e) {
            throw parse_error(e.what(), line);
        }
    } else if (key == "tolerance") {
        s.tolerance = parse_number(v, line);
    } else if (key == "interval") {
        const auto l = parse_list(v, line);
        if (l.size() != 2) throw parse_error("interval needs two numbers", line);
        s.u_lo = l[0];
        s.u_hi = l[1];
    } else if (key == "exclude") {
        s.exclude = parse_number(v, line);
    } else if (key == "margin") {
        s.margin = parse_number(v, line);
    } else {
        throw parse_error("unknown key '" + key + "'", line);
    }
}

} // namespace detail

inline std::vector<ExperimentSpec> parse_suite(std::istream& in) {
    std::vector<ExperimentSpec> out;
    std::vector<int> header_lines;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string text = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw parse_error("unterminated section header", line);
            const std::string inner = detail::trim(text.substr(1, text.size() - 2));
            if (!inner.starts_with("experiment")) throw parse_error("sections must read [experiment name]", line);
            const std::string name = detail::trim(inner.substr(10));
            if (name.empty() || name.find_first_of(" \t/\\") != std::string::npos)
                throw parse_error("experiment name must be one word", line);
            for (const auto& e : out)
                if (e.name == name) throw parse_error("duplicate experiment '" + name + "'", line);
            ExperimentSpec s;
            s.name = name;
            out.push_back(std::move(s));
            header_lines.push_back(line);
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw parse_error("expected key = value", line);
        if (out.empty()) throw parse_error("setting outside an [experiment] section", line);
        const std::string key = detail::trim(text.substr(0, eq)), value = detail::trim(text.substr(eq + 1));
        if (key.empty() || value.empty()) throw parse_error("expected key = value", line);
        detail::assign(out.back(), key, value, line);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        try {
            out[i].validate();
        } catch (const std::exception& e) {
            throw parse_error("experiment '" + out[i].name + "': " + e.what(), header_lines[i]);
        }
    }
    return out;
}

inline std::vector<ExperimentSpec> parse_suite_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open suite file " + path.string());
    return parse_suite(in);
}

struct SuiteOptions {
    std::filesystem::path out_dir = "suite_out";
    bool plot = false;
    bool timing = false;
};

/// Runs every experiment, writes per-experiment files plus summary.csv, and prints the summary.
/// Exit code 0 iff every row passes.
inline int run_suite(const std::vector<ExperimentSpec>& specs, const SuiteOptions& opt, std::ostream& log) {
    std::vector<ComparisonReport> reports;
    for (const auto& s : specs) {
        reports.push_back(compare(s));
        write_report_files(reports.back(), opt.out_dir, opt.plot, opt.timing);
    }
    std::filesystem::create_directories(opt.out_dir);
    std::ofstream summary(opt.out_dir / "summary.csv");
    write_summary_csv(summary, reports);
    write_summary_csv(log, reports);
    bool ok = true;
    for (const auto& r : reports) {
        if (!r.error.empty()) log << r.spec.name << ": error: " << r.error << '\n';
        for (const auto& row : r.rows)
            if (!row.pass)
                log << "FAIL " << r.spec.name << " N=" << row.N << " t=" << fmt12(row.t) << " l1=" << fmt12(row.l1)
                    << " > " << fmt12(row.tolerance) << '\n';
        ok = ok && r.pass();
    }
    return ok ? 0 : 1;
}

inline int run_suite(const std::filesystem::path& path, const SuiteOptions& opt, std::ostream& log) {
    return run_suite(parse_suite_file(path), opt, log);
}

} // namespace zrh
