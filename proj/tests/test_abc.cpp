#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "opvi/abc.hpp"
#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

using namespace opvi;

namespace {

// Two agents starting at the same opinion; every interaction is positive.
Trajectory zero_gap_pair(int n_steps)
{
    Trajectory t;
    t.config.n_agents = 2;
    t.config.n_steps = n_steps;
    t.config.interactions_per_step = 10;
    t.x0 = {0.5, 0.5};
    std::vector<double> x = t.x0;
    LatentParams p;
    for (int s = 0; s < n_steps; ++s)
        for (int k = 0; k < 10; ++k) {
            InteractionEvent ev;
            ev.step = s;
            ev.participants = k % 2 ? std::vector<int>{0, 1} : std::vector<int>{1, 0};
            ev.outcome = step_update(x, ev.participants, ev.d, p, t.config);
            t.events.push_back(ev);
        }
    return t;
}

InteractionEvent event(int step, bool plus, bool minus)
{
    InteractionEvent ev;
    ev.step = step;
    ev.participants = {0, 1};
    ev.outcome.s_plus = plus;
    ev.outcome.s_minus = minus;
    return ev;
}

double mean_eps_plus(const PosteriorSamples& post)
{
    double m = 0.0;
    for (const auto& s : post.samples)
        m += s.eps_plus / static_cast<double>(post.samples.size());
    return m;
}

} // namespace

TEST_CASE("summaries count outcomes per step")
{
    Trajectory neutral;
    neutral.config.n_steps = 3;
    neutral.config.interactions_per_step = 1;
    for (int s = 0; s < 3; ++s)
        neutral.events.push_back(event(s, false, false));
    const SummaryStats zero = summarize(neutral);
    CHECK(zero.pos_counts == std::vector<int>{0, 0, 0});
    CHECK(zero.neg_counts == std::vector<int>{0, 0, 0});

    const SummaryStats pair = summarize(zero_gap_pair(5));
    CHECK(pair.pos_counts == std::vector<int>(5, 10));
    CHECK(pair.neg_counts == std::vector<int>(5, 0));

    Trajectory three;
    three.config.n_steps = 1;
    three.config.interactions_per_step = 3;
    three.events = {event(0, true, false), event(0, false, true), event(0, false, false)};
    const SummaryStats s = summarize(three);
    CHECK(s.pos_counts == std::vector<int>{1});
    CHECK(s.neg_counts == std::vector<int>{1});
}

TEST_CASE("summary counts stay within the interaction budget")
{
    for (const Variant v : {Variant::BCMb, Variant::BCMS, Variant::BCMI, Variant::BCMU, Variant::BCMG}) {
        ModelConfig cfg;
        cfg.variant = v;
        cfg.n_agents = 30;
        cfg.n_steps = 40;
        cfg.seed = 9;
        Rng rng(static_cast<std::uint64_t>(v) + 1);
        const LatentParams p = sample_prior(v, cfg, 0.3, rng);
        const SummaryStats s = summarize(simulate(cfg, p));
        REQUIRE(s.pos_counts.size() == 40);
        for (std::size_t i = 0; i < 40; ++i) {
            CHECK(s.pos_counts[i] >= 0);
            CHECK(s.neg_counts[i] >= 0);
            CHECK(s.pos_counts[i] + s.neg_counts[i] <= cfg.interactions_per_step);
        }
    }
}

TEST_CASE("distance is the euclidean norm of count differences")
{
    const SummaryStats a{{1, 2, 3}, {0, 0, 0}};
    CHECK(distance(a, a) == 0.0);
    SummaryStats b = a;
    b.neg_counts[1] = 1;
    CHECK(distance(a, b) == 1.0);
    const SummaryStats c{{4, 6, 3}, {0, 0, 0}};
    CHECK(distance(a, c) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(distance(a, c) == distance(c, a));
    const SummaryStats shorter{{1}, {0}};
    CHECK_THROWS_AS(distance(a, shorter), DimensionError);
}

TEST_CASE("prior draws lie in the support")
{
    Rng rng(3);
    for (const Variant v : {Variant::BCMb, Variant::BCMS, Variant::BCMI, Variant::BCMU, Variant::BCMG}) {
        ModelConfig cfg;
        cfg.variant = v;
        cfg.n_agents = 20;
        std::set<int> ks;
        for (int i = 0; i < 400; ++i) {
            const LatentParams p = sample_prior(v, cfg, 0.25, rng);
            CHECK_NOTHROW(p.validate(cfg));
            CHECK(p.eps_plus > 0.0);
            CHECK(p.eps_plus < 0.5);
            CHECK(p.eps_minus > 0.5);
            CHECK(p.eps_minus < 1.0);
            if (v == Variant::BCMI)
                ks.insert(p.attention().k_attend);
            const ConstrainedParams c = to_constrained(p, cfg);
            CHECK(c.variant == v);
            for (const double f : c.phi)
                CHECK((f == 0.0 || f == 1.0));
        }
        if (v == Variant::BCMI)
            CHECK(ks.size() == static_cast<std::size_t>(cfg.feed_len));
    }
}

TEST_CASE("abc keeps the closer half")
{
    ModelConfig cfg;
    cfg.n_agents = 20;
    cfg.n_steps = 20;
    cfg.seed = 4;
    const Trajectory obs = simulate(cfg, LatentParams{});
    for (const std::size_t n : {2u, 7u, 40u}) {
        AbcOptions opt;
        opt.n_sims = n;
        opt.seed = 5;
        const AbcResult r = fit_abc(obs, opt);
        CHECK(r.accepted.size() == (n + 1) / 2);
        CHECK(r.posterior.samples.size() == (n + 1) / 2);
        CHECK(r.posterior.source == PosteriorSource::abc);
        for (std::size_t i = 1; i < r.accepted.size(); ++i) {
            const bool ordered = r.accepted[i - 1].distance < r.accepted[i].distance ||
                                 (r.accepted[i - 1].distance == r.accepted[i].distance &&
                                  r.accepted[i - 1].index < r.accepted[i].index);
            CHECK(ordered);
        }
    }
    AbcOptions one;
    one.n_sims = 1;
    CHECK_THROWS_AS(fit_abc(obs, one), ConfigError);
    AbcOptions quick;
    quick.n_sims = 4;
    CHECK_THROWS_AS(fit_abc(obs, quick, Deadline::after(0.0)), TimeoutError);
}

TEST_CASE("abc breaks distance ties by draw order")
{
    // One interaction per run: distances take at most a handful of values,
    // so the accepted set must contain ties, ordered by draw index.
    Trajectory obs;
    obs.config.n_agents = 2;
    obs.config.n_steps = 1;
    obs.config.interactions_per_step = 1;
    obs.x0 = {0.0, 1.0};
    obs.events = {event(0, true, true)};
    AbcOptions opt;
    opt.n_sims = 9;
    const AbcResult r = fit_abc(obs, opt);
    REQUIRE(r.accepted.size() == 5);
    std::set<double> ds;
    for (const auto& d : r.accepted)
        ds.insert(d.distance);
    REQUIRE(ds.size() < 5);
    for (std::size_t i = 1; i < 5; ++i)
        if (r.accepted[i].distance == r.accepted[i - 1].distance)
            CHECK(r.accepted[i].index > r.accepted[i - 1].index);
}

TEST_CASE("abc is deterministic and independent of parallelism")
{
    ModelConfig cfg;
    cfg.variant = Variant::BCMS;
    cfg.n_agents = 20;
    cfg.n_steps = 30;
    cfg.seed = 8;
    LatentParams truth;
    truth.payload = default_payload(Variant::BCMS, 20);
    const Trajectory obs = simulate(cfg, truth);
    AbcOptions opt;
    opt.n_sims = 60;
    opt.seed = 77;
    const AbcResult a = fit_abc(obs, opt);
    opt.parallelism = 3;
    const AbcResult b = fit_abc(obs, opt);
    REQUIRE(a.accepted.size() == b.accepted.size());
    for (std::size_t i = 0; i < a.accepted.size(); ++i) {
        CHECK(a.accepted[i].index == b.accepted[i].index);
        CHECK(a.accepted[i].distance == b.accepted[i].distance);
        CHECK(a.accepted[i].params.phi == b.accepted[i].params.phi);
    }
}

TEST_CASE("abc moves toward the truth on BCMb")
{
    // Prior mean of (eps+, eps-) is (0.25, 0.75); start the truth elsewhere
    // so that "closer than the prior mean" is informative.
    double err_post = 0.0, err_prior = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ModelConfig cfg;
        cfg.n_steps = 512;
        cfg.seed = seed;
        LatentParams truth;
        truth.eps_plus = 0.1;
        truth.eps_minus = 0.6;
        const Trajectory obs = simulate(cfg, truth);
        AbcOptions opt;
        opt.n_sims = 400;
        opt.seed = seed;
        const ConstrainedParams m = posterior_mean(fit_abc(obs, opt).posterior);
        err_post += std::hypot(m.eps_plus - 0.1, m.eps_minus - 0.6);
        err_prior += std::hypot(0.25 - 0.1, 0.75 - 0.6);
    }
    CHECK(err_post < err_prior);
}

TEST_CASE("abc on the all-positive pair favours wide convergence")
{
    // Each simulation draws its own x0, so a run with no negative and no
    // neutral outcome is most likely under a large eps+. The accepted mean
    // must sit above the prior mean 0.25 by more than 4 standard errors.
    const Trajectory obs = zero_gap_pair(20);
    AbcOptions opt;
    opt.n_sims = 2000;
    opt.seed = 12;
    const AbcResult r = fit_abc(obs, opt);
    const double n = static_cast<double>(r.posterior.samples.size());
    const double m = mean_eps_plus(r.posterior);
    double var = 0.0;
    for (const auto& s : r.posterior.samples)
        var += (s.eps_plus - m) * (s.eps_plus - m) / (n - 1);
    CHECK(m - 0.25 > 4.0 * std::sqrt(var / n));
    for (const auto& s : r.posterior.samples) {
        CHECK(s.eps_plus > 0.0);
        CHECK(s.eps_plus < 0.5);
    }
}

TEST_CASE("accepted csv lists parameters and distance")
{
    ModelConfig cfg;
    cfg.variant = Variant::BCMG;
    cfg.n_agents = 20;
    cfg.n_steps = 10;
    LatentParams truth;
    truth.payload = RewirePayload{0.4};
    const Trajectory obs = simulate(cfg, truth);
    AbcOptions opt;
    opt.n_sims = 6;
    const AbcResult r = fit_abc(obs, opt);
    const auto path = std::filesystem::temp_directory_path() / "opvi_abc_test.csv";
    write_accepted(path, r);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "sim_index,eps_plus,eps_minus,gamma,distance");
    int rows = 0;
    while (std::getline(in, line))
        ++rows;
    CHECK(rows == 3);
    std::filesystem::remove(path);
}
