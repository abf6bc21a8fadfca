#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "opvi/csv.hpp"
#include "opvi/errors.hpp"
#include "opvi/experiment.hpp"
#include "opvi/plot.hpp"
#include "opvi/rng.hpp"

using namespace opvi;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("opvi_experiment_" + name);
    fs::remove_all(p);
    return p;
}

// A small fast spec: tiny trajectories, short SVI and ABC budgets.
ExperimentSpec tiny(const fs::path& out)
{
    ExperimentSpec s = parse_spec(R"({
        "spec_version": 1,
        "variant": "BCMb",
        "axes": {"T": [16, 32], "N": [20, 30]},
        "methods": ["abc"],
        "master_seed": 42,
        "abc": {"n_sims": 4}
    })");
    s.output_dir = out;
    return s;
}

} // namespace

TEST_CASE("spec parsing fills defaults and rejects bad input")
{
    const ExperimentSpec s = parse_spec(R"({"spec_version": 1, "variant": "BCM-G",
        "axes": {"gamma": [0.3, 0.6], "eps_plus": 0.2, "K": "sample"},
        "methods": ["svi", "hmc"], "svi": {"n_epochs": 50, "minibatch_events": 64}})");
    CHECK(s.variant == Variant::BCMG);
    CHECK(s.gamma.values == std::vector<double>{0.3, 0.6});
    CHECK(s.eps_plus.values == std::vector<double>{0.2});
    CHECK(s.eps_minus.sample);
    CHECK(s.k_attend.sample);
    CHECK(s.methods == std::vector<PosteriorSource>{PosteriorSource::svi, PosteriorSource::mcmc});
    CHECK(s.svi.n_epochs == 50);
    CHECK(s.svi.minibatch_events == 64);
    CHECK(s.time_limit_seconds == 10800.0);
    CHECK(s.n_steps == std::vector<int>{128});
    CHECK_FALSE(s.record_wall_time);

    CHECK_THROWS_AS(parse_spec(R"({"spec_version": 2, "variant": "BCMb"})"), ConfigError);
    CHECK_THROWS_AS(parse_spec(R"({"variant": "BCMb"})"), ConfigError);
    CHECK_THROWS_AS(parse_spec(R"({"spec_version": 1, "variant": "BCMb", "axes": {"Q": [1]}})"), ConfigError);
    CHECK_THROWS_AS(parse_spec(R"({"spec_version": 1, "variant": "BCMb", "axes": {"T": []}})"), ConfigError);
    CHECK_THROWS_AS(parse_spec(R"({"spec_version": 1, "variant": "BCMb", "methods": []})"), ConfigError);
    CHECK_THROWS_AS(parse_spec(R"({"spec_version": 1, "variant": "BCMb", "methods": ["nuts"]})"), ConfigError);
    CHECK_THROWS_AS(parse_spec(R"({"spec_version": 1, "variant": "BCMb", "axes": {"gamma": "all"}})"),
                    ConfigError);
    CHECK_THROWS_AS(parse_spec("{not json"), ConfigError);
    CHECK_THROWS_AS(load_spec("/nonexistent/spec.json"), Error);
}

TEST_CASE("grid expansion and documented seeds")
{
    const ExperimentSpec s = tiny(scratch("expand"));
    const auto cells = expand(s);
    REQUIRE(cells.size() == 4);
    CHECK(cells[0].n_steps == 16);
    CHECK(cells[0].n_agents == 20);
    CHECK(cells[1].n_agents == 30);
    CHECK(cells[2].n_steps == 32);
    std::set<std::uint64_t> seeds;
    for (const auto& c : cells)
        seeds.insert(c.seed);
    CHECK(seeds.size() == 4);
    // cell (T index 1, N index 0), every other axis index 0, replicate 0
    CHECK(cells[2].seed == hash_seed(std::uint64_t{42}, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0));

    ExperimentSpec r = s;
    r.replicates = 3;
    CHECK(expand(r).size() == 12);
}

TEST_CASE("cell truths follow the axes and sampling supports")
{
    ExperimentSpec s;
    s.variant = Variant::BCMS;
    s.n_agents = {50};
    s.leader_frac = {0.2};
    s.replicates = 50;
    for (const GridCell& c : expand(s)) {
        const LatentParams p = cell_truth(s, c);
        const RolePayload& r = p.roles();
        int leaders = 0;
        for (const bool l : r.leader)
            leaders += l ? 1 : 0;
        CHECK(leaders == 10);
        CHECK(p.eps_plus >= r.eps_plus_L);
        CHECK(p.eps_minus <= r.eps_minus_L);
        const double k = (p.eps_plus - 0.05) / 0.05;
        CHECK(std::abs(k - std::round(k)) < 1e-9);
        CHECK_NOTHROW(p.validate(cell_config(s, c)));
    }

    ExperimentSpec fixed;
    fixed.variant = Variant::BCMI;
    fixed.eps_plus = ValueAxis{false, {0.3}};
    fixed.k_attend = ValueAxis{false, {4}};
    const GridCell c = expand(fixed).front();
    const LatentParams p = cell_truth(fixed, c);
    CHECK(p.eps_plus == 0.3);
    CHECK(p.attention().k_attend == 4);
    CHECK(cell_truth(fixed, c) == p);
}

TEST_CASE("posterior summary thins evenly")
{
    PosteriorSamples post;
    for (int i = 0; i < 10; ++i) {
        ConstrainedParams c;
        c.eps_plus = i;
        post.samples.push_back(c);
    }
    CHECK(summarize_posterior(post, 5).eps_plus == doctest::Approx((0 + 2 + 4 + 6 + 8) / 5.0));
    CHECK(summarize_posterior(post, 50).eps_plus == doctest::Approx(4.5));
}

TEST_CASE("run_single smoke and timeouts")
{
    ExperimentSpec s = tiny(scratch("single"));
    const GridCell cell = expand(s).front();
    const auto results = run_single(s, cell);
    REQUIRE(results.size() == 1);
    CHECK(results[0].status == RunStatus::ok);
    CHECK(rows(results[0]).size() == 2);
    for (const auto& sc : results[0].scores)
        CHECK(sc.error >= 0.0);

    s.methods = {PosteriorSource::svi, PosteriorSource::mcmc, PosteriorSource::abc};
    s.time_limit_seconds = 0.0;
    for (const auto& r : run_single(s, cell)) {
        CHECK(r.status == RunStatus::timeout);
        for (const auto& row : rows(r))
            CHECK(std::isnan(row.estimate));
    }
}

TEST_CASE("method failures are recorded, not thrown")
{
    ExperimentSpec s = tiny(scratch("failed"));
    s.methods = {PosteriorSource::mcmc};
    s.hmc.adapt_step_size = false;
    s.hmc.step_size = 100.0;
    s.hmc.n_burnin = 0;
    s.hmc.n_samples = 50;
    const auto results = run_single(s, expand(s).front());
    REQUIRE(results.size() == 1);
    CHECK(results[0].status == RunStatus::failed);
    CHECK(results[0].message.find("acceptance") != std::string::npos);
}

TEST_CASE("grid output is deterministic, schema-valid and resumable")
{
    const fs::path a = scratch("grid_a"), b = scratch("grid_b");
    ExperimentSpec sa = tiny(a), sb = tiny(b);
    const GridSummary ga = run_grid(sa);
    GridOptions par;
    par.parallelism = 3;
    const GridSummary gb = run_grid(sb, par);
    CHECK(ga.jobs == 4);
    CHECK(ga.ok == 4);
    const std::string text = slurp(a / "results.csv");
    CHECK(text == slurp(b / "results.csv"));

    const auto parsed = read_results(a / "results.csv");
    CHECK(parsed.size() == 8);
    std::set<std::uint64_t> groups;
    for (const auto& r : parsed)
        groups.insert(r.seed);
    CHECK(groups.size() == 4);
    CHECK(fs::exists(a / "plot_error_vs_T.csv"));
    CHECK(fs::exists(a / "plot_error_vs_N.csv"));
    CHECK(fs::exists(a / "plot_scatter.svg"));
    CHECK(fs::exists(a / "timings.csv"));

    // Rerun: everything is skipped and the file is unchanged.
    const GridSummary again = run_grid(sa);
    CHECK(again.skipped == 4);
    CHECK(slurp(a / "results.csv") == text);

    // Mark one job failed; only that job reruns and the file heals.
    std::istringstream lines(text);
    std::string line, edited;
    int n = 0;
    while (std::getline(lines, line)) {
        if (n == 1 || n == 2)
            line = line.substr(0, line.rfind(',')) + ",failed";
        edited += line + "\n";
        ++n;
    }
    {
        std::ofstream out(a / "results.csv");
        out << edited;
    }
    const GridSummary healed = run_grid(sa);
    CHECK(healed.skipped == 3);
    CHECK(slurp(a / "results.csv") == text);

    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("grid refuses an unwritable output directory")
{
    const fs::path file = scratch("blocker");
    {
        std::ofstream out(file);
        out << "x";
    }
    ExperimentSpec s = tiny(file / "sub");
    CHECK_THROWS_AS(run_grid(s), Error);
    fs::remove(file);
}

TEST_CASE("scatter data of a perfect estimator lies on the diagonal")
{
    const fs::path dir = scratch("plots");
    fs::create_directories(dir);
    std::vector<ResultRow> rows;
    Rng rng(5);
    for (int i = 0; i < 12; ++i) {
        ResultRow r;
        r.seed = static_cast<std::uint64_t>(i);
        r.n_steps = 100 * (1 + i % 3);
        r.param_name = i % 2 ? "eps_plus" : "eps_minus";
        r.truth = r.estimate = rng.uniform();
        r.error = 0.0;
        rows.push_back(r);
    }
    write_plots(dir, rows);
    std::ifstream in(dir / "plot_scatter.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "method,param_name,truth,estimate");
    int count = 0;
    while (std::getline(in, line)) {
        const auto f = csv::split(line);
        CHECK(f[2] == f[3]);
        ++count;
    }
    CHECK(count == 12);
    const std::string svg = slurp(dir / "plot_error_vs_T.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    fs::remove_all(dir);
}
