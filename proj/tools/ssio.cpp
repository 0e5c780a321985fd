// Command-line front end: `ssio solve` runs one method on a user-supplied
// incomplete matrix, `ssio bench` reproduces the benchmark suite.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssio/annealer.hpp"
#include "ssio/baselines.hpp"
#include "ssio/bench.hpp"
#include "ssio/extensions.hpp"
#include "ssio/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;      // config/parse errors
constexpr int kExitInfeasible = 3; // infeasible r or constraints
constexpr int kExitSingular = 4;   // singular information matrix
constexpr int kExitIo = 5;         // file I/O failures

void write_or_print(const nlohmann::ordered_json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw ssio::IoError("cannot open for writing: " + out_path);
    out << j.dump(2) << '\n';
    if (!out) throw ssio::IoError("write failed: " + out_path);
}

std::vector<ssio::InstanceSpec> parse_suite_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ssio::IoError("cannot open suite file: " + path);
    std::vector<ssio::InstanceSpec> specs;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = ssio::detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto toks = ssio::detail::split_csv(t);
        const std::string where = path + ":" + std::to_string(lineno);
        if (toks.size() != 7)
            throw ssio::ParseError(where + ": expected id,n,p,missing_fraction,r,lo,hi");
        ssio::InstanceSpec spec;
        spec.id = toks[0];
        spec.n = static_cast<int>(ssio::detail::parse_number(toks[1], where));
        spec.p = static_cast<int>(ssio::detail::parse_number(toks[2], where));
        spec.missing_fraction = ssio::detail::parse_number(toks[3], where);
        spec.r = static_cast<int>(ssio::detail::parse_number(toks[4], where));
        spec.lo = ssio::detail::parse_number(toks[5], where);
        spec.hi = ssio::detail::parse_number(toks[6], where);
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) throw ssio::Infeasible("empty suite");
    return specs;
}

struct SolveOptions {
    std::string input;
    std::string bounds;
    int r = 0;
    std::string criterion = "a";
    std::string method = "ssio";
    double t_init = 0.0;
    double alpha = 0.9;
    double t_min = 0.0;
    double tol = 1e-7;
    std::uint64_t seed = 0;
    std::string budget;
    std::string out;
};

int run_solve(const SolveOptions& opt) {
    const ssio::DesignCriterion crit =
        opt.criterion == "d" ? ssio::DesignCriterion::D : ssio::DesignCriterion::A;
    if (!opt.budget.empty() && opt.method != "ssio")
        throw ssio::ParseError("--budget is only valid with --method ssio");

    const ssio::IncompleteMatrix inst = ssio::parse_matrix(opt.input, opt.bounds);
    ssio::AnnealSchedule sched;
    sched.t_init = opt.t_init;
    sched.alpha = opt.alpha;
    sched.t_min = opt.t_min;
    sched.inner_tol = opt.tol;

    nlohmann::ordered_json j;
    if (opt.method == "ssio") {
        if (!opt.budget.empty()) {
            if (crit == ssio::DesignCriterion::D)
                throw ssio::ParseError("--budget supports --criterion a only");
            const ssio::BudgetSpec budget =
                ssio::parse_budget(opt.budget, inst.rows(), inst.cols());
            auto res = ssio::constrained_anneal(inst, opt.r, sched, budget, opt.seed);
            j = ssio::solution_json(res.design, inst, "ssio+budget", res.state.converged,
                                    &res.state.trace);
        } else {
            auto [state, hd] = ssio::anneal(inst, opt.r, sched, crit, opt.seed);
            j = ssio::solution_json(hd, inst, "ssio", state.converged, &state.trace);
        }
    } else if (opt.method == "fedorov") {
        const ssio::Matrix X = ssio::mean_impute(inst);
        auto res = ssio::fedorov_exchange(X, opt.r, crit, opt.seed);
        j = ssio::solution_json(res.design, inst, "mean+fedorov", res.converged);
    } else if (opt.method == "uniform") {
        const ssio::Matrix X = ssio::mean_impute(inst);
        auto res = ssio::uniform_sample(X, opt.r, opt.seed);
        j = ssio::solution_json(res.design, inst, "mean+uniform", res.converged);
    } else if (opt.method == "direct") {
        if (crit == ssio::DesignCriterion::D)
            throw ssio::ParseError("--method direct supports --criterion a only");
        auto res = ssio::direct_joint(inst, opt.r, opt.seed);
        j = ssio::solution_json(res.design, inst, "direct", res.converged);
    } else if (opt.method == "brute") {
        ssio::HardDesign hd =
            inst.missing_count() > 0
                ? ssio::brute_force_joint(inst, opt.r, crit, 51)
                : ssio::brute_force_select(inst.complete(), opt.r, crit);
        j = ssio::solution_json(hd, inst, "brute", true);
    } else {
        throw ssio::ParseError("unknown method: " + opt.method);
    }
    write_or_print(j, opt.out);
    return kExitOk;
}

struct BenchOptions {
    std::string suite = "table1";
    int seeds = 20;
    std::string out_dir = ".";
    std::string format = "csv";
    bool timings = false;
    double alpha = 0.9;
};

int run_bench(const BenchOptions& opt) {
    const std::vector<ssio::InstanceSpec> specs =
        opt.suite == "table1" ? ssio::table1_specs() : parse_suite_file(opt.suite);
    if (opt.seeds < 1) throw ssio::ParseError("--seeds must be >= 1");
    std::vector<std::uint64_t> seeds;
    for (int k = 1; k <= opt.seeds; ++k) seeds.push_back(static_cast<std::uint64_t>(k));

    ssio::AnnealSchedule sched;
    sched.alpha = opt.alpha;
    const ssio::RatioReport report = ssio::run_comparison(
        specs, seeds, ssio::all_bench_methods(), sched, opt.timings);

    std::filesystem::create_directories(opt.out_dir);
    const std::string base = opt.out_dir + "/report";
    if (opt.format == "csv" || opt.format == "both")
        ssio::emit_report_csv(report, base + ".csv");
    if (opt.format == "json" || opt.format == "both")
        ssio::emit_report_json(report, base + ".json");

    for (const auto& [name, agg] : report.aggregates) {
        if (name == "ssio") continue;
        std::cout << "geometric-mean ratio ssio/" << name << ": " << agg.geometric_mean_ratio
                  << " (win rate " << agg.win_rate << " over " << agg.runs << " runs)\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ssio - joint experiment selection and missing-data imputation"};
    app.footer("Exit codes: 0 success, 2 usage/parse error, 3 infeasible instance or\n"
               "constraints, 4 singular information matrix, 5 I/O failure.");
    app.require_subcommand(1);

    SolveOptions sopt;
    CLI::App* solve = app.add_subcommand("solve", "solve one instance from a CSV file");
    solve->add_option("--input", sopt.input, "matrix CSV (numbers or NA)")->required();
    solve->add_option("--bounds", sopt.bounds, "sidecar bounds CSV: i,j,lo,hi (0-based)");
    solve->add_option("--select", sopt.r, "number of rows to select (r)")->required();
    solve->add_option("--criterion", sopt.criterion, "design criterion")
        ->check(CLI::IsMember({"a", "d"}));
    solve->add_option("--method", sopt.method, "ssio|fedorov|uniform|direct|brute")
        ->check(CLI::IsMember({"ssio", "fedorov", "uniform", "direct", "brute"}));
    solve->add_option("--t-init", sopt.t_init, "initial temperature (0 = automatic)");
    solve->add_option("--alpha", sopt.alpha, "geometric cooling factor");
    solve->add_option("--t-min", sopt.t_min, "final temperature (0 = automatic)");
    solve->add_option("--tol", sopt.tol, "inner fixed-point tolerance");
    solve->add_option("--seed", sopt.seed, "seed for the stochastic methods");
    solve->add_option("--budget", sopt.budget, "budget CSV: caps row then n cost rows");
    solve->add_option("--out", sopt.out, "output JSON path (default: stdout)");

    BenchOptions bopt;
    CLI::App* bench = app.add_subcommand("bench", "run the benchmark suite");
    bench->add_option("--suite", bopt.suite, "'table1' or a custom suite CSV path");
    bench->add_option("--seeds", bopt.seeds, "seeds per instance");
    bench->add_option("--out", bopt.out_dir, "output directory");
    bench->add_option("--format", bopt.format, "report format")
        ->check(CLI::IsMember({"csv", "json", "both"}));
    bench->add_option("--alpha", bopt.alpha, "geometric cooling factor");
    bench->add_flag("--timings", bopt.timings,
                    "record wall times (makes reports non-reproducible)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*solve) return run_solve(sopt);
        return run_bench(bopt);
    } catch (const ssio::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ssio::Infeasible& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const ssio::GuardError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInfeasible;
    } catch (const ssio::SingularInformation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSingular;
    } catch (const ssio::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const ssio::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}
