// opvi: simulate, fit, grid and check from the command line.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "opvi/abc.hpp"
#include "opvi/acceptance.hpp"
#include "opvi/errors.hpp"
#include "opvi/experiment.hpp"
#include "opvi/mcmc.hpp"
#include "opvi/metrics.hpp"
#include "opvi/rng.hpp"
#include "opvi/svi.hpp"
#include "opvi/trajectory_io.hpp"

namespace fs = std::filesystem;
using namespace opvi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitAcceptance = 3;

struct SimulateArgs {
    std::string variant = "BCMb";
    int steps = 128, agents = 100, interactions = 10, feed_len = 10;
    double mu = 0.02, xi = 0.5, density = 0.1, leader_frac = 0.2;
    std::optional<double> mu_leader, eps_plus, eps_minus, eps_plus_L, eps_minus_L, gamma;
    std::optional<int> k_attend, beta;
    std::uint64_t seed = 0;
    std::string out;
};

struct FitArgs {
    std::string trajectory;
    std::string method = "svi";
    std::uint64_t seed = 0;
    double time_limit = 0.0; // 0 = none
    std::string out = "fit";
    std::size_t parallelism = 1;
    std::size_t epochs = 20000, minibatch = 0, draws = 200;
    std::size_t burnin = 5000, samples = 5000;
    std::size_t n_sims = 10000;
    double leader_frac = 0.2;
};

struct GridArgs {
    std::string spec;
    std::optional<std::uint64_t> seed;
    std::optional<double> time_limit;
    std::string out;
    std::size_t parallelism = 1;
    std::vector<std::string> methods;
};

struct CheckArgs {
    std::vector<int> only;
    std::size_t parallelism = 1;
    std::string out;
};

int run_simulate(const SimulateArgs& a)
{
    ModelConfig cfg;
    cfg.variant = parse_variant(a.variant);
    cfg.n_steps = a.steps;
    cfg.n_agents = a.agents;
    cfg.interactions_per_step = a.interactions;
    cfg.feed_len = a.feed_len;
    cfg.mu_plus = cfg.mu_minus = a.mu;
    cfg.mu_plus_L = cfg.mu_minus_L = a.mu_leader.value_or(a.mu);
    cfg.xi = a.xi;
    cfg.graph_density = a.density;
    cfg.seed = a.seed;
    cfg.validate();

    // Latents not given on the command line come from the prior.
    Rng rng = Rng::stream(a.seed, 0x51A);
    LatentParams p = sample_prior(cfg.variant, cfg, a.leader_frac, rng);
    if (a.eps_plus)
        p.eps_plus = *a.eps_plus;
    if (a.eps_minus)
        p.eps_minus = *a.eps_minus;
    switch (cfg.variant) {
    case Variant::BCMS: {
        auto& r = std::get<RolePayload>(p.payload);
        if (a.eps_plus_L)
            r.eps_plus_L = *a.eps_plus_L;
        if (a.eps_minus_L)
            r.eps_minus_L = *a.eps_minus_L;
        break;
    }
    case Variant::BCMI:
        if (a.k_attend)
            std::get<AttentionPayload>(p.payload).k_attend = *a.k_attend;
        break;
    case Variant::BCMU:
        if (a.beta)
            std::get<BackfirePayload>(p.payload).beta = *a.beta != 0;
        break;
    case Variant::BCMG:
        if (a.gamma)
            std::get<RewirePayload>(p.payload).gamma = *a.gamma;
        break;
    default:
        break;
    }
    p.validate(cfg);

    const Trajectory traj = simulate(cfg, p);
    if (a.out.empty() || a.out == "-")
        write_trajectory(std::cout, traj, p);
    else
        write_trajectory(fs::path(a.out), traj, p);
    std::cerr << "simulated " << traj.events.size() << " events\n";
    return kExitOk;
}

void print_estimate(const ConstrainedParams& mean, const std::optional<LatentParams>& truth,
                    const ModelConfig& config)
{
    std::cout << "posterior mean:\n";
    for (const auto& [name, value] : named_values(mean))
        std::cout << "  " << name << " = " << value << "\n";
    if (!truth)
        return;
    std::cout << "error against the recorded truth:\n";
    for (const ParamScore& s : score(*truth, mean, config))
        std::cout << "  " << s.name << ": truth " << s.truth << ", estimate " << s.estimate << ", error " << s.error
                  << "\n";
}

int run_fit(const FitArgs& a)
{
    const PosteriorSource method = parse_method(a.method);
    const TrajectoryFile file = read_trajectory(fs::path(a.trajectory));
    const Trajectory& traj = file.trajectory;
    const Deadline deadline = a.time_limit > 0.0 ? Deadline::after(a.time_limit) : Deadline{};
    const fs::path out(a.out);
    fs::create_directories(out);

    PosteriorSamples posterior;
    switch (method) {
    case PosteriorSource::svi: {
        SviHyperparams h;
        h.n_epochs = a.epochs;
        h.minibatch_events = a.minibatch;
        h.seed = a.seed;
        const LikelihoodData data(traj, PgabmConfig{});
        const SviResult fit = fit_svi(data, h, deadline);
        posterior = sample_posterior(fit.lambda, traj.config.variant, traj.config, a.draws, hash_seed(a.seed, 1));
        write_elbo_trace(out / "elbo_trace.csv", fit.elbo_trace);
        std::cerr << "final ELBO " << fit.elbo_trace.back() << "\n";
        break;
    }
    case PosteriorSource::mcmc: {
        HmcHyperparams h;
        h.n_burnin = a.burnin;
        h.n_samples = a.samples;
        h.seed = a.seed;
        const LikelihoodData data(traj, PgabmConfig{});
        HmcFit fit = fit_hmc(data, h, deadline);
        write_chain(out / "chain.csv", fit.chain);
        std::cerr << "acceptance rate " << fit.chain.acceptance_rate << ", step size " << fit.chain.step_size
                  << "\n";
        posterior = std::move(fit.posterior);
        break;
    }
    case PosteriorSource::abc: {
        AbcOptions o;
        o.n_sims = a.n_sims;
        o.seed = a.seed;
        o.leader_fraction = a.leader_frac;
        o.parallelism = a.parallelism;
        const AbcResult fit = fit_abc(traj, o, deadline);
        write_accepted(out / "abc_accepted.csv", fit);
        posterior = fit.posterior;
        break;
    }
    }
    write_posterior(out / "posterior.csv", posterior);
    print_estimate(summarize_posterior(posterior, a.draws), file.truth, traj.config);
    return kExitOk;
}

int run_grid_command(const GridArgs& a)
{
    ExperimentSpec spec = load_spec(a.spec);
    if (a.seed)
        spec.master_seed = *a.seed;
    if (a.time_limit)
        spec.time_limit_seconds = *a.time_limit;
    if (!a.out.empty())
        spec.output_dir = a.out;
    if (!a.methods.empty()) {
        spec.methods.clear();
        for (const std::string& m : a.methods)
            spec.methods.push_back(parse_method(m));
    }
    spec.validate();

    GridOptions opt;
    opt.parallelism = a.parallelism;
    opt.on_result = [](const ExperimentResult& r) {
        std::cerr << to_string(r.variant) << " " << to_string(r.method) << " T=" << r.n_steps << " N=" << r.n_agents
                  << " seed=" << r.seed << ": " << to_string(r.status);
        if (!r.message.empty())
            std::cerr << " (" << r.message << ")";
        std::cerr << "\n";
    };
    const GridSummary s = run_grid(spec, opt);
    std::cout << s.jobs << " jobs: " << s.skipped << " resumed, " << s.ok << " ok, " << s.timeout << " timeout, "
              << s.failed << " failed\nresults: " << s.results.string() << "\n";
    return kExitOk;
}

int run_check(const CheckArgs& a)
{
    AcceptanceOptions opt;
    opt.only.insert(a.only.begin(), a.only.end());
    opt.parallelism = a.parallelism;
    opt.scratch = a.out;
    opt.on_result = [](const CriterionResult& r) { std::cout << format_result(r) << std::endl; };
    const auto results = run_acceptance(opt);
    std::size_t passed = 0;
    for (const CriterionResult& r : results)
        passed += r.passed ? 1 : 0;
    std::cout << passed << "/" << results.size() << " criteria passed\n";
    return passed == results.size() ? kExitOk : kExitAcceptance;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Opinion-dynamics ABM inference: simulate, fit, grid, check"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate_cmd = app.add_subcommand("simulate", "simulate a trajectory and write it with its truth");
    simulate_cmd->add_option("--variant", sim.variant, "BCMb, BCMS, BCMI, BCMU or BCMG")->capture_default_str();
    simulate_cmd->add_option("--steps,-T", sim.steps, "time steps")->capture_default_str();
    simulate_cmd->add_option("--agents,-N", sim.agents, "agents")->capture_default_str();
    simulate_cmd->add_option("--interactions", sim.interactions, "interactions per step")->capture_default_str();
    simulate_cmd->add_option("--feed-len,-F", sim.feed_len, "feed length (BCMI)")->capture_default_str();
    simulate_cmd->add_option("--mu", sim.mu, "convergence/divergence rate")->capture_default_str();
    simulate_cmd->add_option("--mu-leader", sim.mu_leader, "leader rate (BCMS); defaults to --mu");
    simulate_cmd->add_option("--xi", sim.xi, "probability of opinion dynamics (BCMG)")->capture_default_str();
    simulate_cmd->add_option("--density", sim.density, "initial edge density (BCMG)")->capture_default_str();
    simulate_cmd->add_option("--leader-frac", sim.leader_frac, "prior leader fraction (BCMS)")
        ->capture_default_str();
    simulate_cmd->add_option("--eps-plus", sim.eps_plus, "convergence threshold");
    simulate_cmd->add_option("--eps-minus", sim.eps_minus, "divergence threshold");
    simulate_cmd->add_option("--eps-plus-leader", sim.eps_plus_L, "leader convergence threshold (BCMS)");
    simulate_cmd->add_option("--eps-minus-leader", sim.eps_minus_L, "leader divergence threshold (BCMS)");
    simulate_cmd->add_option("--k", sim.k_attend, "attention depth (BCMI)");
    simulate_cmd->add_option("--beta", sim.beta, "backfire flag 0/1 (BCMU)")->check(CLI::Range(0, 1));
    simulate_cmd->add_option("--gamma", sim.gamma, "rewiring threshold (BCMG)");
    simulate_cmd->add_option("--seed", sim.seed, "simulation seed")->capture_default_str();
    simulate_cmd->add_option("--out", sim.out, "output file; stdout when omitted");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "fit a trajectory file with one method");
    fit_cmd->add_option("trajectory", fit.trajectory, "trajectory file")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--method", fit.method, "svi, hmc or abc")->capture_default_str();
    fit_cmd->add_option("--seed", fit.seed, "method seed")->capture_default_str();
    fit_cmd->add_option("--time-limit", fit.time_limit, "seconds; 0 means no limit")->capture_default_str();
    fit_cmd->add_option("--out", fit.out, "output directory")->capture_default_str();
    fit_cmd->add_option("--parallelism", fit.parallelism, "ABC simulation workers")->capture_default_str();
    fit_cmd->add_option("--epochs", fit.epochs, "SVI epochs")->capture_default_str();
    fit_cmd->add_option("--minibatch", fit.minibatch, "SVI events per step; 0 = all")->capture_default_str();
    fit_cmd->add_option("--draws", fit.draws, "SVI posterior draws, and draws averaged for the estimate")
        ->capture_default_str();
    fit_cmd->add_option("--burnin", fit.burnin, "HMC burn-in iterations")->capture_default_str();
    fit_cmd->add_option("--samples", fit.samples, "HMC kept draws")->capture_default_str();
    fit_cmd->add_option("--n-sims", fit.n_sims, "ABC simulations")->capture_default_str();
    fit_cmd->add_option("--leader-frac", fit.leader_frac, "ABC prior leader fraction (BCMS)")->capture_default_str();

    GridArgs grid;
    auto* grid_cmd = app.add_subcommand("grid", "run an experiment grid from a JSON spec");
    grid_cmd->add_option("spec", grid.spec, "experiment spec file")->required()->check(CLI::ExistingFile);
    grid_cmd->add_option("--seed", grid.seed, "override the master seed");
    grid_cmd->add_option("--time-limit", grid.time_limit, "override the per-method limit in seconds");
    grid_cmd->add_option("--out", grid.out, "override the output directory");
    grid_cmd->add_option("--parallelism", grid.parallelism, "concurrent cells")->capture_default_str();
    grid_cmd->add_option("--method", grid.methods, "override the methods (repeatable)");

    CheckArgs check;
    auto* check_cmd = app.add_subcommand("check", "run the acceptance criteria");
    check_cmd->add_option("--only", check.only, "criterion numbers to run (repeatable)")
        ->check(CLI::Range(1, kCriteriaCount))
        ->delimiter(',');
    check_cmd->add_option("--parallelism", check.parallelism, "workers for independent seeds")
        ->capture_default_str();
    check_cmd->add_option("--out", check.out, "scratch directory for grid outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*simulate_cmd)
            return run_simulate(sim);
        if (*fit_cmd)
            return run_fit(fit);
        if (*grid_cmd)
            return run_grid_command(grid);
        return run_check(check);
    } catch (const ConfigError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
