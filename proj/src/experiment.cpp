#include "opvi/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "opvi/csv.hpp"
#include "opvi/errors.hpp"
#include "opvi/pgabm.hpp"
#include "opvi/plot.hpp"
#include "opvi/rng.hpp"

namespace opvi {

using nlohmann::json;

namespace {

constexpr int kSpecVersion = 1;

ValueAxis read_axis(const json& axes, const char* key, ValueAxis fallback)
{
    if (!axes.contains(key))
        return fallback;
    const json& v = axes.at(key);
    if (v.is_string()) {
        if (v.get<std::string>() != "sample")
            throw ConfigError(std::string("axis '") + key + "': expected a list of numbers or \"sample\"");
        return ValueAxis{true, {}};
    }
    ValueAxis a;
    if (v.is_number())
        a.values = {v.get<double>()};
    else
        a.values = v.get<std::vector<double>>();
    return a;
}

template <class T>
std::vector<T> read_list(const json& axes, const char* key, std::vector<T> fallback)
{
    if (!axes.contains(key))
        return fallback;
    const json& v = axes.at(key);
    if (v.is_number())
        return {v.get<T>()};
    return v.get<std::vector<T>>();
}

// The sampling supports for "sample" axes.
double pick(Rng& rng, double lo, double step, int count)
{
    return lo + step * static_cast<double>(rng.below(static_cast<std::uint64_t>(count)));
}

std::optional<double> axis_value(const ValueAxis& a, std::size_t i)
{
    if (a.sample)
        return std::nullopt;
    return a.values.at(i);
}

} // namespace

void ExperimentSpec::validate() const
{
    if (spec_version != kSpecVersion)
        throw ConfigError("unsupported spec_version " + std::to_string(spec_version) + " (expected " +
                          std::to_string(kSpecVersion) + ")");
    if (n_steps.empty() || n_agents.empty() || feed_len.empty() || xi.empty() || leader_frac.empty() || mu.empty())
        throw ConfigError("grid axes must be non-empty");
    for (const ValueAxis* a : {&eps_plus, &eps_minus, &eps_plus_L, &eps_minus_L, &k_attend, &beta, &gamma})
        if (!a->sample && a->values.empty())
            throw ConfigError("grid axes must be non-empty");
    if (methods.empty())
        throw ConfigError("methods must be non-empty");
    if (replicates < 1)
        throw ConfigError("replicates must be at least 1");
    if (!(time_limit_seconds >= 0.0))
        throw ConfigError("time_limit_seconds must be non-negative");
    if (abc_sims < 2)
        throw ConfigError("abc n_sims must be at least 2");
    if (posterior_draws == 0)
        throw ConfigError("posterior_draws must be positive");
    svi.validate();
    hmc.validate();
    for (const double lf : leader_frac)
        if (!(lf >= 0.0 && lf <= 1.0))
            throw ConfigError("leader_frac values must lie in [0,1]");
}

ExperimentSpec parse_spec(std::string_view text)
{
    ExperimentSpec s;
    std::string key = "(document)";
    try {
        const json j = json::parse(text);
        key = "spec_version";
        s.spec_version = j.at("spec_version").get<int>();
        key = "variant";
        s.variant = parse_variant(j.at("variant").get<std::string>());
        if (j.contains("axes")) {
            const json& a = j.at("axes");
            for (auto it = a.begin(); it != a.end(); ++it) {
                static const std::set<std::string> known{"T",           "N",          "F",     "xi",
                                                         "leader_frac", "mu",         "eps_plus",
                                                         "eps_minus",   "eps_plus_L", "eps_minus_L",
                                                         "K",           "beta",       "gamma"};
                if (!known.count(it.key()))
                    throw ConfigError("unknown axis '" + it.key() + "'");
            }
            key = "axes.T";
            s.n_steps = read_list<int>(a, "T", s.n_steps);
            key = "axes.N";
            s.n_agents = read_list<int>(a, "N", s.n_agents);
            key = "axes.F";
            s.feed_len = read_list<int>(a, "F", s.feed_len);
            key = "axes.xi";
            s.xi = read_list<double>(a, "xi", s.xi);
            key = "axes.leader_frac";
            s.leader_frac = read_list<double>(a, "leader_frac", s.leader_frac);
            key = "axes.mu";
            s.mu = read_list<double>(a, "mu", s.mu);
            key = "axes.eps";
            s.eps_plus = read_axis(a, "eps_plus", s.eps_plus);
            s.eps_minus = read_axis(a, "eps_minus", s.eps_minus);
            s.eps_plus_L = read_axis(a, "eps_plus_L", s.eps_plus_L);
            s.eps_minus_L = read_axis(a, "eps_minus_L", s.eps_minus_L);
            key = "axes.K";
            s.k_attend = read_axis(a, "K", s.k_attend);
            key = "axes.beta";
            s.beta = read_axis(a, "beta", s.beta);
            key = "axes.gamma";
            s.gamma = read_axis(a, "gamma", s.gamma);
        }
        key = "methods";
        if (j.contains("methods")) {
            s.methods.clear();
            for (const auto& m : j.at("methods"))
                s.methods.push_back(parse_method(m.get<std::string>()));
        }
        key = "replicates";
        s.replicates = j.value("replicates", s.replicates);
        key = "master_seed";
        s.master_seed = j.value("master_seed", s.master_seed);
        key = "time_limit_seconds";
        s.time_limit_seconds = j.value("time_limit_seconds", s.time_limit_seconds);
        key = "output_dir";
        s.output_dir = j.value("output_dir", s.output_dir.string());
        key = "interactions_per_step";
        s.interactions_per_step = j.value("interactions_per_step", s.interactions_per_step);
        key = "graph_density";
        s.graph_density = j.value("graph_density", s.graph_density);
        key = "posterior_draws";
        s.posterior_draws = j.value("posterior_draws", s.posterior_draws);
        key = "record_wall_time";
        s.record_wall_time = j.value("record_wall_time", s.record_wall_time);
        if (j.contains("svi")) {
            key = "svi";
            const json& v = j.at("svi");
            s.svi.learning_rate = v.value("learning_rate", s.svi.learning_rate);
            s.svi.n_epochs = v.value("n_epochs", s.svi.n_epochs);
            s.svi.elbo_samples = v.value("elbo_samples", s.svi.elbo_samples);
            s.svi.minibatch_events = v.value("minibatch_events", s.svi.minibatch_events);
        }
        if (j.contains("hmc")) {
            key = "hmc";
            const json& v = j.at("hmc");
            s.hmc.step_size = v.value("step_size", s.hmc.step_size);
            s.hmc.n_leapfrog = v.value("n_leapfrog", s.hmc.n_leapfrog);
            s.hmc.n_burnin = v.value("n_burnin", s.hmc.n_burnin);
            s.hmc.n_samples = v.value("n_samples", s.hmc.n_samples);
            s.hmc.target_accept = v.value("target_accept", s.hmc.target_accept);
        }
        if (j.contains("abc")) {
            key = "abc";
            s.abc_sims = j.at("abc").value("n_sims", s.abc_sims);
        }
    } catch (const json::exception& e) {
        throw ConfigError("experiment spec, key '" + key + "': " + e.what());
    }
    s.validate();
    return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path.string() + "'");
    std::ostringstream text;
    text << in.rdbuf();
    try {
        return parse_spec(text.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<GridCell> expand(const ExperimentSpec& spec)
{
    spec.validate();
    std::vector<GridCell> cells;
    for (std::size_t iT = 0; iT < spec.n_steps.size(); ++iT)
    for (std::size_t iN = 0; iN < spec.n_agents.size(); ++iN)
    for (std::size_t iF = 0; iF < spec.feed_len.size(); ++iF)
    for (std::size_t iX = 0; iX < spec.xi.size(); ++iX)
    for (std::size_t iL = 0; iL < spec.leader_frac.size(); ++iL)
    for (std::size_t iM = 0; iM < spec.mu.size(); ++iM)
    for (std::size_t a = 0; a < spec.eps_plus.size(); ++a)
    for (std::size_t b = 0; b < spec.eps_minus.size(); ++b)
    for (std::size_t c = 0; c < spec.eps_plus_L.size(); ++c)
    for (std::size_t d = 0; d < spec.eps_minus_L.size(); ++d)
    for (std::size_t k = 0; k < spec.k_attend.size(); ++k)
    for (std::size_t e = 0; e < spec.beta.size(); ++e)
    for (std::size_t g = 0; g < spec.gamma.size(); ++g)
    for (int rep = 0; rep < spec.replicates; ++rep) {
        GridCell cell;
        cell.variant = spec.variant;
        cell.n_steps = spec.n_steps[iT];
        cell.n_agents = spec.n_agents[iN];
        cell.feed_len = spec.feed_len[iF];
        cell.xi = spec.xi[iX];
        cell.leader_frac = spec.leader_frac[iL];
        cell.mu = spec.mu[iM];
        cell.eps_plus = axis_value(spec.eps_plus, a);
        cell.eps_minus = axis_value(spec.eps_minus, b);
        cell.eps_plus_L = axis_value(spec.eps_plus_L, c);
        cell.eps_minus_L = axis_value(spec.eps_minus_L, d);
        if (const auto v = axis_value(spec.k_attend, k))
            cell.k_attend = static_cast<int>(std::lround(*v));
        if (const auto v = axis_value(spec.beta, e))
            cell.beta = *v != 0.0;
        cell.gamma = axis_value(spec.gamma, g);
        cell.replicate = rep;
        cell.seed = hash_seed(spec.master_seed, iT, iN, iF, iX, iL, iM, a, b, c, d, k, e, g, rep);
        cells.push_back(cell);
    }
    return cells;
}

ModelConfig cell_config(const ExperimentSpec& spec, const GridCell& cell)
{
    ModelConfig cfg;
    cfg.variant = cell.variant;
    cfg.n_agents = cell.n_agents;
    cfg.n_steps = cell.n_steps;
    cfg.interactions_per_step = spec.interactions_per_step;
    cfg.mu_plus = cfg.mu_minus = cfg.mu_plus_L = cfg.mu_minus_L = cell.mu;
    cfg.feed_len = cell.feed_len;
    cfg.xi = cell.xi;
    cfg.graph_density = spec.graph_density;
    cfg.seed = cell.seed;
    cfg.validate();
    return cfg;
}

LatentParams cell_truth(const ExperimentSpec&, const GridCell& cell)
{
    Rng rng = Rng::stream(cell.seed, 0x7A17u);
    LatentParams p;
    p.eps_plus = cell.eps_plus.value_or(pick(rng, 0.05, 0.05, 9));
    p.eps_minus = cell.eps_minus.value_or(pick(rng, 0.55, 0.05, 9));
    switch (cell.variant) {
    case Variant::BCMS: {
        RolePayload r;
        r.eps_plus_L = cell.eps_plus_L.value_or(pick(rng, 0.05, 0.05, 9));
        r.eps_minus_L = cell.eps_minus_L.value_or(pick(rng, 0.55, 0.05, 9));
        if (!cell.eps_plus || !cell.eps_plus_L) {
            // Sampled thresholds are ordered so followers are more permissive.
            const double hi = std::max(p.eps_plus, r.eps_plus_L), lo = std::min(p.eps_plus, r.eps_plus_L);
            p.eps_plus = hi;
            r.eps_plus_L = lo;
        }
        if (!cell.eps_minus || !cell.eps_minus_L) {
            const double hi = std::max(p.eps_minus, r.eps_minus_L), lo = std::min(p.eps_minus, r.eps_minus_L);
            p.eps_minus = lo;
            r.eps_minus_L = hi;
        }
        const auto n = static_cast<std::size_t>(cell.n_agents);
        const auto n_leaders = static_cast<std::size_t>(std::lround(cell.leader_frac * static_cast<double>(n)));
        r.leader.assign(n, false);
        for (const std::uint32_t u : sample_indices(n, n_leaders, rng))
            r.leader[u] = true;
        p.payload = std::move(r);
        break;
    }
    case Variant::BCMI:
        p.payload = AttentionPayload{cell.k_attend.value_or(1 + static_cast<int>(rng.below(
                                                                    static_cast<std::uint64_t>(cell.feed_len))))};
        break;
    case Variant::BCMU: p.payload = BackfirePayload{cell.beta.value_or(rng.bernoulli(0.5))}; break;
    case Variant::BCMG: p.payload = RewirePayload{cell.gamma.value_or(pick(rng, 0.1, 0.1, 9))}; break;
    default: break;
    }
    return p;
}

ConstrainedParams summarize_posterior(const PosteriorSamples& posterior, std::size_t n)
{
    if (posterior.samples.empty())
        throw ConfigError("empty posterior");
    const std::size_t total = posterior.samples.size();
    if (n == 0 || n >= total)
        return posterior_mean(posterior);
    PosteriorSamples thinned;
    thinned.source = posterior.source;
    thinned.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        thinned.samples.push_back(posterior.samples[i * total / n]);
    return posterior_mean(thinned);
}

ExperimentResult run_method(const ExperimentSpec& spec, const GridCell& cell, const Trajectory& observed,
                            PosteriorSource method)
{
    ExperimentResult r;
    r.variant = cell.variant;
    r.method = method;
    r.seed = cell.seed;
    r.n_steps = cell.n_steps;
    r.n_agents = cell.n_agents;
    r.feed_len = cell.feed_len;
    r.xi = cell.xi;
    r.leader_frac = cell.leader_frac;

    const LatentParams truth = cell_truth(spec, cell);
    const ModelConfig& cfg = observed.config;
    // Placeholder scores carry the truth for timeout and failed rows.
    ConstrainedParams placeholder = to_constrained(truth, cfg);
    r.scores = score(truth, placeholder, cfg);

    const std::uint64_t method_seed = hash_seed(cell.seed, static_cast<std::uint64_t>(method) + 1);
    const auto start = std::chrono::steady_clock::now();
    const Deadline deadline = Deadline::after(spec.time_limit_seconds);
    try {
        PosteriorSamples posterior;
        switch (method) {
        case PosteriorSource::svi: {
            const LikelihoodData data(observed, PgabmConfig{});
            SviHyperparams h = spec.svi;
            h.seed = method_seed;
            const SviResult fit = fit_svi(data, h, deadline);
            posterior = sample_posterior(fit.lambda, cfg.variant, cfg, spec.posterior_draws, hash_seed(method_seed, 1));
            break;
        }
        case PosteriorSource::mcmc: {
            const LikelihoodData data(observed, PgabmConfig{});
            HmcHyperparams h = spec.hmc;
            h.seed = method_seed;
            posterior = fit_hmc(data, h, deadline).posterior;
            break;
        }
        case PosteriorSource::abc: {
            AbcOptions opt;
            opt.n_sims = spec.abc_sims;
            opt.seed = method_seed;
            opt.leader_fraction = cell.leader_frac;
            posterior = fit_abc(observed, opt, deadline).posterior;
            break;
        }
        }
        r.scores = score(truth, summarize_posterior(posterior, spec.posterior_draws), cfg);
        r.status = RunStatus::ok;
    } catch (const TimeoutError& e) {
        r.status = RunStatus::timeout;
        r.message = e.what();
    } catch (const std::exception& e) {
        r.status = RunStatus::failed;
        r.message = e.what();
    }
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (r.status == RunStatus::ok && spec.time_limit_seconds >= 0.0 && r.wall_time_s > spec.time_limit_seconds) {
        r.status = RunStatus::timeout;
        r.message = "finished after the time limit";
    }
    return r;
}

namespace {

// Simulation failures (an infeasible BCMG graph, say) fail the job rather
// than the grid.
ExperimentResult run_job(const ExperimentSpec& spec, const GridCell& cell, PosteriorSource method,
                         const Trajectory* observed = nullptr)
{
    std::optional<Trajectory> local;
    if (!observed) {
        try {
            local = simulate(cell_config(spec, cell), cell_truth(spec, cell));
        } catch (const Error& e) {
            ExperimentResult r;
            r.variant = cell.variant;
            r.method = method;
            r.seed = cell.seed;
            r.n_steps = cell.n_steps;
            r.n_agents = cell.n_agents;
            r.feed_len = cell.feed_len;
            r.xi = cell.xi;
            r.leader_frac = cell.leader_frac;
            r.status = RunStatus::failed;
            r.message = std::string("simulation: ") + e.what();
            for (const std::string& name : scored_names(cell.variant))
                r.scores.push_back({name, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0});
            return r;
        }
        observed = &*local;
    }
    return run_method(spec, cell, *observed, method);
}

} // namespace

std::vector<ExperimentResult> run_single(const ExperimentSpec& spec, const GridCell& cell)
{
    std::optional<Trajectory> observed;
    try {
        observed = simulate(cell_config(spec, cell), cell_truth(spec, cell));
    } catch (const Error&) {
    }
    std::vector<ExperimentResult> out;
    for (const PosteriorSource m : spec.methods)
        out.push_back(run_job(spec, cell, m, observed ? &*observed : nullptr));
    return out;
}

GridSummary run_grid(const ExperimentSpec& spec, const GridOptions& options)
{
    const std::vector<GridCell> cells = expand(spec);
    const std::filesystem::path dir = spec.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());

    GridSummary summary;
    summary.results = dir / "results.csv";

    // Resumption: a job whose existing rows are all ok is kept as is.
    using JobKey = std::pair<std::uint64_t, PosteriorSource>;
    std::map<JobKey, std::vector<ResultRow>> kept;
    if (std::filesystem::exists(summary.results)) {
        std::map<JobKey, bool> all_ok;
        for (ResultRow& row : read_results(summary.results)) {
            const JobKey key{row.seed, row.method};
            auto [it, fresh] = all_ok.emplace(key, true);
            it->second = it->second && row.status == RunStatus::ok;
            kept[key].push_back(std::move(row));
        }
        for (const auto& [key, ok] : all_ok)
            if (!ok)
                kept.erase(key);
    } else {
        std::ofstream out = csv::open_for_write(summary.results);
        out << kResultsHeader << '\n';
    }

    struct Job {
        std::size_t cell;
        PosteriorSource method;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (const PosteriorSource m : spec.methods)
            jobs.push_back({c, m});
    summary.jobs = jobs.size();

    std::vector<std::optional<ExperimentResult>> done(jobs.size());
    std::vector<std::size_t> todo;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (kept.count({cells[jobs[j].cell].seed, jobs[j].method}))
            ++summary.skipped;
        else
            todo.push_back(j);
    }

    // Single writer: completed jobs are appended as they finish so that an
    // interrupted grid can resume; the final file is rewritten in order.
    std::mutex write_mutex;
    std::ofstream append = csv::open_for_write(summary.results, true);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&]() {
        for (std::size_t t = next++; t < todo.size(); t = next++) {
            try {
                const Job& job = jobs[todo[t]];
                const GridCell& cell = cells[job.cell];
                ExperimentResult r = run_job(spec, cell, job.method);
                const std::lock_guard lock(write_mutex);
                for (ResultRow row : rows(r)) {
                    if (!spec.record_wall_time)
                        row.wall_time_s = 0.0;
                    append << format_row(row) << '\n';
                }
                append.flush();
                if (!append)
                    throw Error("write failed for '" + summary.results.string() + "'");
                if (options.on_result)
                    options.on_result(r);
                done[todo[t]] = std::move(r);
            } catch (...) {
                const std::lock_guard lock(write_mutex);
                if (!failure)
                    failure = std::current_exception();
                next = todo.size();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.parallelism, todo.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i)
            pool.emplace_back(worker);
        for (std::thread& th : pool)
            th.join();
    }
    append.close();
    if (failure)
        std::rethrow_exception(failure);

    // Canonical rewrite.
    std::vector<ResultRow> all;
    std::ostringstream timings;
    timings << "seed,method,status,wall_time_s\n";
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const JobKey key{cells[jobs[j].cell].seed, jobs[j].method};
        if (done[j]) {
            const ExperimentResult& r = *done[j];
            timings << r.seed << ',' << to_string(r.method) << ',' << to_string(r.status) << ','
                    << csv::number(r.wall_time_s) << '\n';
            switch (r.status) {
            case RunStatus::ok: ++summary.ok; break;
            case RunStatus::timeout: ++summary.timeout; break;
            case RunStatus::failed: ++summary.failed; break;
            }
            for (ResultRow row : rows(r)) {
                if (!spec.record_wall_time)
                    row.wall_time_s = 0.0;
                all.push_back(std::move(row));
            }
        } else {
            const auto& rs = kept.at(key);
            ++summary.ok;
            all.insert(all.end(), rs.begin(), rs.end());
        }
    }
    const std::filesystem::path tmp = dir / "results.csv.tmp";
    {
        std::ofstream out = csv::open_for_write(tmp);
        out << kResultsHeader << '\n';
        for (const ResultRow& row : all)
            out << format_row(row) << '\n';
        if (!out)
            throw Error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, summary.results, ec);
    if (ec)
        throw Error("cannot replace '" + summary.results.string() + "': " + ec.message());
    {
        std::ofstream out = csv::open_for_write(dir / "timings.csv");
        out << timings.str();
    }
    write_plots(dir, all);
    return summary;
}

} // namespace opvi
