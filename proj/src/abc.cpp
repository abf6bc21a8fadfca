#include "opvi/abc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "opvi/csv.hpp"
#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

namespace opvi {

SummaryStats summarize(const Trajectory& traj)
{
    const auto t = static_cast<std::size_t>(std::max(traj.config.n_steps, 0));
    SummaryStats s{std::vector<int>(t, 0), std::vector<int>(t, 0)};
    for (const InteractionEvent& ev : traj.events) {
        if (ev.step < 0 || static_cast<std::size_t>(ev.step) >= t)
            throw ConfigError("event step " + std::to_string(ev.step) + " outside the trajectory");
        const auto k = static_cast<std::size_t>(ev.step);
        s.pos_counts[k] += ev.outcome.s_plus ? 1 : 0;
        s.neg_counts[k] += ev.outcome.s_minus ? 1 : 0;
    }
    return s;
}

double distance(const SummaryStats& a, const SummaryStats& b)
{
    if (a.pos_counts.size() != b.pos_counts.size() || a.neg_counts.size() != b.neg_counts.size())
        throw DimensionError("summary statistics have different lengths (" + std::to_string(a.pos_counts.size()) +
                             " vs " + std::to_string(b.pos_counts.size()) + ")");
    double ss = 0.0;
    for (std::size_t i = 0; i < a.pos_counts.size(); ++i) {
        const double d = a.pos_counts[i] - b.pos_counts[i];
        ss += d * d;
    }
    for (std::size_t i = 0; i < a.neg_counts.size(); ++i) {
        const double d = a.neg_counts[i] - b.neg_counts[i];
        ss += d * d;
    }
    return std::sqrt(ss);
}

LatentParams sample_prior(Variant variant, const ModelConfig& config, double leader_fraction, Rng& rng)
{
    LatentParams p;
    p.eps_plus = 0.5 * rng.uniform_open();
    p.eps_minus = 0.5 + 0.5 * rng.uniform_open();
    switch (variant) {
    case Variant::BCMS: {
        RolePayload r;
        const double a = 0.5 * rng.uniform_open();
        const double b = 0.5 + 0.5 * rng.uniform_open();
        r.eps_plus_L = std::min(p.eps_plus, a);
        p.eps_plus = std::max(p.eps_plus, a);
        r.eps_minus_L = std::max(p.eps_minus, b);
        p.eps_minus = std::min(p.eps_minus, b);
        r.leader.resize(static_cast<std::size_t>(config.n_agents));
        for (std::size_t u = 0; u < r.leader.size(); ++u)
            r.leader[u] = rng.bernoulli(leader_fraction);
        p.payload = std::move(r);
        break;
    }
    case Variant::BCMI:
        p.payload = AttentionPayload{1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.feed_len)))};
        break;
    case Variant::BCMU: p.payload = BackfirePayload{rng.bernoulli(0.5)}; break;
    case Variant::BCMG: p.payload = RewirePayload{rng.uniform_open()}; break;
    default: p.payload = std::monostate{}; break;
    }
    return p;
}

ConstrainedParams to_constrained(const LatentParams& latents, const ModelConfig& config)
{
    ConstrainedParams c;
    c.variant = config.variant;
    c.eps_plus = latents.eps_plus;
    c.eps_minus = latents.eps_minus;
    c.eps_plus_L = latents.eps_plus;
    c.eps_minus_L = latents.eps_minus;
    switch (config.variant) {
    case Variant::BCMS: {
        const RolePayload& r = latents.roles();
        c.eps_plus_L = r.eps_plus_L;
        c.eps_minus_L = r.eps_minus_L;
        for (const bool leader : r.leader)
            c.phi.push_back(leader ? 1.0 : 0.0);
        break;
    }
    case Variant::BCMI:
        c.phi.assign(static_cast<std::size_t>(config.feed_len), 0.0);
        c.phi.at(static_cast<std::size_t>(latents.attention().k_attend - 1)) = 1.0;
        break;
    case Variant::BCMU: c.phi = {latents.backfire().beta ? 1.0 : 0.0}; break;
    case Variant::BCMG: c.gamma = latents.rewiring().gamma; break;
    default: break;
    }
    return c;
}

AbcResult fit_abc(const Trajectory& observed, const AbcOptions& options, const Deadline& deadline)
{
    if (options.n_sims < 2)
        throw ConfigError("abc needs at least 2 simulations");
    if (!(options.leader_fraction >= 0.0 && options.leader_fraction <= 1.0))
        throw ConfigError("leader_fraction must lie in [0,1]");
    observed.config.validate();
    deadline.check("abc");
    const SummaryStats target = summarize(observed);
    const std::size_t n = options.n_sims;

    std::vector<AbcDraw> draws(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        try {
            for (std::size_t i = next++; i < n && !stop; i = next++) {
                if (deadline.expired()) {
                    stop = true;
                    break;
                }
                Rng rng = Rng::stream(options.seed, i);
                const LatentParams latents =
                    sample_prior(observed.config.variant, observed.config, options.leader_fraction, rng);
                ModelConfig cfg = observed.config;
                cfg.seed = hash_seed(options.seed, i, 0xABCu);
                draws[i].index = i;
                draws[i].params = to_constrained(latents, cfg);
                try {
                    draws[i].distance = distance(summarize(simulate(cfg, latents)), target);
                } catch (const InfeasibleRewireError&) {
                    // This seed's graph cannot rewire; rank the draw last.
                    draws[i].distance = std::numeric_limits<double>::infinity();
                }
            }
        } catch (...) {
            const std::lock_guard lock(failure_mutex);
            if (!failure)
                failure = std::current_exception();
            stop = true;
        }
    };

    const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.parallelism, n));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
        for (std::thread& th : pool)
            th.join();
    }
    if (failure)
        std::rethrow_exception(failure);
    if (stop)
        deadline.check("abc");

    std::stable_sort(draws.begin(), draws.end(), [](const AbcDraw& a, const AbcDraw& b) {
        return a.distance < b.distance;
    });
    const std::size_t keep = (n + 1) / 2;
    draws.resize(keep);

    AbcResult result;
    result.posterior.source = PosteriorSource::abc;
    result.posterior.samples.reserve(keep);
    for (const AbcDraw& d : draws)
        result.posterior.samples.push_back(d.params);
    result.accepted = std::move(draws);
    return result;
}

void write_accepted(const std::filesystem::path& path, const AbcResult& result)
{
    std::ofstream out = csv::open_for_write(path);
    out << "sim_index";
    if (!result.accepted.empty())
        for (const auto& [name, value] : named_values(result.accepted.front().params))
            out << ',' << name;
    out << ",distance\n";
    for (const AbcDraw& d : result.accepted) {
        out << d.index;
        for (const auto& [name, value] : named_values(d.params))
            out << ',' << csv::number(value);
        out << ',' << csv::number(d.distance) << '\n';
    }
    if (!out)
        throw Error("write failed for '" + path.string() + "'");
}

} // namespace opvi
