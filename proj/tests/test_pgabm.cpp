#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "opvi/abm_sim.hpp"
#include "opvi/errors.hpp"
#include "opvi/pgabm.hpp"
#include "opvi/rng.hpp"

using namespace opvi;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double log_bern(double p, bool s) { return std::log(s ? p : 1.0 - p); }

// Direct per-event evaluation of the relaxed likelihood, written without
// the library's row/offset machinery. BCMS uses the expectation r = phi.
double oracle_loglik(const Trajectory& tr, const ConstrainedParams& p, double rho = 32.0)
{
    const ModelConfig& c = tr.config;
    const auto replay_terms = [&](int attend, bool beta_on, std::vector<double>& out) {
        std::vector<double> x = tr.x0;
        for (const InteractionEvent& ev : tr.events) {
            const std::size_t k = c.variant == Variant::BCMG ? 2 : ev.participants.size();
            const int v = ev.participants[k - 1];
            double mean = 0.0;
            for (int j = 0; j < attend; ++j)
                mean += x[static_cast<std::size_t>(ev.participants[static_cast<std::size_t>(j)])];
            mean /= attend;
            const double gap = mean - x[static_cast<std::size_t>(v)];
            const double dist = std::abs(gap);
            if (ev.d == Dynamics::rewire) {
                out.push_back(log_bern(sig(-rho * (p.gamma - dist)), ev.outcome.s_rewire));
                continue;
            }
            double ep = p.eps_plus, em = p.eps_minus;
            double mp = c.mu_plus, mm = c.mu_minus;
            if (c.variant == Variant::BCMS) {
                const double r = p.phi[static_cast<std::size_t>(v)];
                ep = p.eps_plus + r * (p.eps_plus_L - p.eps_plus);
                em = p.eps_minus + r * (p.eps_minus_L - p.eps_minus);
                mp = c.mu_plus + r * (c.mu_plus_L - c.mu_plus);
                mm = c.mu_minus + r * (c.mu_minus_L - c.mu_minus);
            }
            if (!beta_on)
                mm = 0.0;
            out.push_back(log_bern(sig(rho * (ep - dist)), ev.outcome.s_plus) +
                          log_bern(sig(-rho * (em - dist)), ev.outcome.s_minus));
            double next = x[static_cast<std::size_t>(v)];
            if (ev.outcome.s_plus)
                next += mp * gap;
            if (ev.outcome.s_minus)
                next -= mm * gap;
            x[static_cast<std::size_t>(v)] = std::clamp(next, 0.0, 1.0);
        }
    };

    double total = 0.0;
    if (c.variant == Variant::BCMI || c.variant == Variant::BCMU) {
        std::vector<std::vector<double>> paths;
        std::vector<double> w;
        if (c.variant == Variant::BCMI) {
            double norm = 0.0;
            for (const double f : p.phi)
                norm += f;
            for (int k = 1; k <= c.feed_len; ++k) {
                paths.emplace_back();
                replay_terms(k, true, paths.back());
                w.push_back(p.phi[static_cast<std::size_t>(k - 1)] / norm);
            }
        } else {
            paths.resize(2);
            replay_terms(1, false, paths[0]);
            replay_terms(1, true, paths[1]);
            w = {1.0 - p.phi[0], p.phi[0]};
        }
        for (std::size_t e = 0; e < tr.events.size(); ++e) {
            double mix = 0.0;
            for (std::size_t k = 0; k < paths.size(); ++k)
                mix += w[k] * std::exp(paths[k][e]);
            total += std::log(mix);
        }
        return total;
    }
    std::vector<double> terms;
    replay_terms(1, true, terms);
    for (const double t : terms)
        total += t;
    return total;
}

ModelConfig small_config(Variant v, int n = 12, int steps = 15, std::uint64_t seed = 5)
{
    ModelConfig c;
    c.variant = v;
    c.n_agents = n;
    c.n_steps = steps;
    c.interactions_per_step = 4;
    c.mu_plus = 0.1;
    c.mu_minus = 0.08;
    c.mu_plus_L = c.mu_plus;
    c.mu_minus_L = c.mu_minus;
    c.feed_len = 4;
    c.xi = 0.5;
    c.graph_density = 0.4;
    c.seed = seed;
    return c;
}

LatentParams truth_for(Variant v, int n)
{
    LatentParams p{0.3, 0.7, default_payload(v, n)};
    if (auto* r = std::get_if<RolePayload>(&p.payload)) {
        r->eps_plus_L = 0.15;
        r->eps_minus_L = 0.85;
        for (int i = 0; i < n; i += 3)
            r->leader[static_cast<std::size_t>(i)] = true;
    }
    if (auto* a = std::get_if<AttentionPayload>(&p.payload))
        a->k_attend = 2;
    if (auto* g = std::get_if<RewirePayload>(&p.payload))
        g->gamma = 0.35;
    return p;
}

std::vector<double> random_theta(std::size_t m, Rng& rng)
{
    std::vector<double> t(m);
    for (double& x : t)
        x = rng.uniform(-2.0, 2.0);
    return t;
}

const std::vector<Variant> kAll{Variant::BCMb, Variant::BCMS, Variant::BCMI, Variant::BCMU, Variant::BCMG};

} // namespace

TEST_CASE("transform maps into the constrained boxes")
{
    const ModelConfig c = small_config(Variant::BCMb);
    const auto zero = transform(std::vector<double>{0.0, 0.0}, Variant::BCMb, c);
    CHECK(zero.eps_plus == 0.25);
    CHECK(zero.eps_minus == 0.75);
    CHECK(transform(std::vector<double>{50.0, 50.0}, Variant::BCMb, c).eps_plus == doctest::Approx(0.5));
    CHECK(transform(std::vector<double>{std::log(4.0), 0.0}, Variant::BCMb, c).eps_plus ==
          doctest::Approx(0.4).epsilon(1e-15));
    CHECK(transform(std::vector<double>{1.3863, 0.0}, Variant::BCMb, c).eps_plus ==
          doctest::Approx(0.40000045).epsilon(1e-7));
    CHECK_THROWS_AS(transform(std::vector<double>{0.0}, Variant::BCMb, c), DimensionError);
    CHECK_THROWS_AS(transform(std::vector<double>(3, 0.0), Variant::BCMS, c), DimensionError);
}

TEST_CASE("theta dimensions per variant")
{
    const ModelConfig c = small_config(Variant::BCMS, 40);
    CHECK(theta_dim(Variant::BCMb, c) == 2);
    CHECK(theta_dim(Variant::BCMS, c) == 44);
    CHECK(theta_dim(Variant::BCMI, c) == 6);
    CHECK(theta_dim(Variant::BCMU, c) == 3);
    CHECK(theta_dim(Variant::BCMG, c) == 3);
}

TEST_CASE("transform round trips through its inverse")
{
    Rng rng(1);
    for (const Variant v : kAll) {
        const ModelConfig c = small_config(v);
        for (int trial = 0; trial < 20; ++trial) {
            const auto theta = random_theta(theta_dim(v, c), rng);
            const auto back = inverse_transform(transform(theta, v, c), c);
            REQUIRE(back.size() == theta.size());
            for (std::size_t i = 0; i < theta.size(); ++i)
                CHECK(std::abs(back[i] - theta[i]) < 1e-9);
        }
    }
}

TEST_CASE("tape transform agrees with the plain transform")
{
    Rng rng(2);
    for (const Variant v : kAll) {
        const ModelConfig c = small_config(v);
        const auto theta = random_theta(theta_dim(v, c), rng);
        const ConstrainedParams p = transform(theta, v, c);
        ad::Tape tape;
        const ConstrainedVars cv = transform(tape.input(theta), v, c);
        CHECK(cv.eps_plus.scalar() == doctest::Approx(p.eps_plus).epsilon(1e-15));
        CHECK(cv.eps_minus.scalar() == doctest::Approx(p.eps_minus).epsilon(1e-15));
        if (v == Variant::BCMS) {
            CHECK(cv.eps_plus_L.scalar() == doctest::Approx(p.eps_plus_L).epsilon(1e-15));
            CHECK(cv.eps_minus_L.scalar() == doctest::Approx(p.eps_minus_L).epsilon(1e-15));
            for (std::size_t i = 0; i < p.phi.size(); ++i) {
                CHECK(std::exp(cv.log_phi.value()[i]) == doctest::Approx(p.phi[i]).epsilon(1e-13));
                CHECK(std::exp(cv.log_phi_compl.value()[i]) == doctest::Approx(1 - p.phi[i]).epsilon(1e-13));
            }
        }
        if (v == Variant::BCMI || v == Variant::BCMU)
            for (std::size_t i = 0; i < p.phi.size(); ++i)
                CHECK(cv.phi.value()[i] == doctest::Approx(p.phi[i]).epsilon(1e-15));
        if (v == Variant::BCMG)
            CHECK(cv.gamma.scalar() == doctest::Approx(p.gamma).epsilon(1e-15));
    }
}

TEST_CASE("log_jacobian")
{
    CHECK(log_jacobian(std::vector<double>{0.0}, Variant::BCMb) == doctest::Approx(std::log(0.125)).epsilon(1e-15));
    CHECK(log_jacobian(std::vector<double>{}, Variant::BCMb) == 0.0);
    // third BCMU coordinate is a plain sigmoid: log(1/4)
    CHECK(log_jacobian(std::vector<double>{0.0, 0.0, 0.0}, Variant::BCMU) ==
          doctest::Approx(2 * std::log(0.125) + std::log(0.25)));
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto theta = random_theta(6, rng);
        std::vector<double> neg(theta);
        for (double& t : neg)
            t = -t;
        CHECK(log_jacobian(theta, Variant::BCMI) == doctest::Approx(log_jacobian(neg, Variant::BCMI)).epsilon(1e-14));

        // matches a numeric derivative of each coordinate map
        const ModelConfig c = small_config(Variant::BCMI);
        double numeric = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            auto up = theta, down = theta;
            up[i] += 1e-6;
            down[i] -= 1e-6;
            const auto pu = transform(up, Variant::BCMI, c), pd = transform(down, Variant::BCMI, c);
            const double cu = i == 0 ? pu.eps_plus : i == 1 ? pu.eps_minus : pu.phi[i - 2];
            const double cd = i == 0 ? pd.eps_plus : i == 1 ? pd.eps_minus : pd.phi[i - 2];
            numeric += std::log((cu - cd) / 2e-6);
        }
        CHECK(log_jacobian(theta, Variant::BCMI) == doctest::Approx(numeric).epsilon(1e-6));

        ad::Tape tape;
        CHECK(log_jacobian(tape.input(theta), Variant::BCMI).scalar() ==
              doctest::Approx(log_jacobian(theta, Variant::BCMI)).epsilon(1e-14));
    }
}

TEST_CASE("kappa values")
{
    const ModelConfig c = small_config(Variant::BCMb);
    const PgabmConfig pg;
    ConstrainedParams p;
    p.eps_plus = 0.25;
    p.eps_minus = 0.75;
    InteractionEvent ev;
    ev.participants = {0, 1};

    std::vector<double> x{0.5, 0.25};
    CHECK(kappa(x, ev, p, c, pg).p_plus == doctest::Approx(0.5));
    x = {0.65, 0.5};
    CHECK(kappa(x, ev, p, c, pg).p_plus == doctest::Approx(0.960834277203236).epsilon(1e-12));
    p.eps_plus = 0.2;
    x = {0.06, 0.62};
    const Kappa k = kappa(x, ev, p, c, pg);
    CHECK(k.p_plus == doctest::Approx(9.9294057e-6).epsilon(1e-6));
    CHECK(k.p_plus <= 1e-5);
    CHECK(k.p_minus == doctest::Approx(sig(-32 * (0.75 - 0.56))));
}

TEST_CASE("kappa masks by the dynamics flag for BCMG")
{
    const ModelConfig c = small_config(Variant::BCMG);
    ConstrainedParams p;
    p.variant = Variant::BCMG;
    p.gamma = 0.3;
    InteractionEvent ev;
    ev.participants = {0, 1};
    std::vector<double> x{0.1, 0.5};
    ev.d = Dynamics::rewire;
    Kappa k = kappa(x, ev, p, c, PgabmConfig{});
    CHECK(k.p_plus == 0.0);
    CHECK(k.p_minus == 0.0);
    CHECK(k.p_rewire == doctest::Approx(sig(-32 * (0.3 - 0.4))));
    ev.d = Dynamics::update;
    k = kappa(x, ev, p, c, PgabmConfig{});
    CHECK(k.p_rewire == 0.0);
    CHECK(k.p_plus > 0.0);
}

TEST_CASE("p_plus is monotone in eps_plus")
{
    Rng rng(4);
    const ModelConfig c = small_config(Variant::BCMb);
    InteractionEvent ev;
    ev.participants = {0, 1};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x{rng.uniform(), rng.uniform()};
        ConstrainedParams lo, hi;
        lo.eps_plus = rng.uniform(0.0, 0.5);
        hi.eps_plus = rng.uniform(lo.eps_plus, 0.5);
        CHECK(kappa(x, ev, hi, c, PgabmConfig{}).p_plus >= kappa(x, ev, lo, c, PgabmConfig{}).p_plus);
    }
}

TEST_CASE("gumbel_softmax")
{
    Rng rng(6);
    SUBCASE("output is on the simplex and keeps the noisy argmax")
    {
        for (int trial = 0; trial < 100; ++trial) {
            const std::vector<double> probs{0.2, 0.3, 0.5};
            const std::vector<double> noise{rng.gumbel(), rng.gumbel(), rng.gumbel()};
            std::size_t best = 0;
            for (std::size_t k = 1; k < 3; ++k)
                if (std::log(probs[k]) + noise[k] > std::log(probs[best]) + noise[best])
                    best = k;
            for (const double tau : {0.05, 0.1, 1.0, 10.0}) {
                const auto y = gumbel_softmax(probs, tau, noise);
                double total = 0.0;
                for (const double yi : y)
                    total += yi;
                CHECK(total == doctest::Approx(1.0));
                CHECK(static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin()) == best);
            }
        }
    }
    SUBCASE("one-hot probabilities always select their class")
    {
        for (int trial = 0; trial < 50; ++trial) {
            const std::vector<double> noise{rng.gumbel(), rng.gumbel(), rng.gumbel()};
            const auto y = gumbel_softmax(std::vector<double>{0.0, 1.0, 0.0}, 0.1, noise);
            CHECK(std::max_element(y.begin(), y.end()) - y.begin() == 1);
        }
    }
    SUBCASE("low temperature is nearly one-hot")
    {
        // logits differ by 5 after noise: softmax((5, 0) / 0.1)
        const auto y = gumbel_softmax(std::vector<double>{0.5, 0.5}, 0.1, std::vector<double>{5.0, 0.0});
        CHECK(y[0] > 0.99);
        CHECK(y[1] == doctest::Approx(1.0 / (1.0 + std::exp(50.0))));
    }
    SUBCASE("hard argmax is an exact categorical sampler")
    {
        const std::vector<double> probs{0.2, 0.3, 0.5};
        std::vector<double> counts(3, 0.0);
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const std::vector<double> noise{rng.gumbel(), rng.gumbel(), rng.gumbel()};
            const auto y = gumbel_softmax(probs, 0.1, noise);
            counts[static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin())] += 1;
        }
        double chi2 = 0.0;
        for (std::size_t k = 0; k < 3; ++k)
            chi2 += (counts[k] - n * probs[k]) * (counts[k] - n * probs[k]) / (n * probs[k]);
        CHECK(chi2 < 13.815510558); // chi-square(2) at 0.001
    }
    CHECK_THROWS_AS(gumbel_softmax(std::vector<double>{0.5}, 0.1, std::vector<double>{}), DimensionError);
    CHECK_THROWS_AS(gumbel_softmax(std::vector<double>{1.0}, 0.0, std::vector<double>{0.0}), ConfigError);
}

TEST_CASE("replay reproduces the simulator's opinion states")
{
    for (const Variant v : kAll) {
        CAPTURE(to_string(v));
        ModelConfig c = small_config(v);
        if (v == Variant::BCMS) {
            c.mu_plus_L = 0.03;
            c.mu_minus_L = 0.01;
        }
        const LatentParams truth = truth_for(v, c.n_agents);
        std::vector<std::vector<double>> sim_states, replay_states;
        const Trajectory tr = simulate(c, truth, [&](std::size_t, std::span<const double> x) {
            sim_states.emplace_back(x.begin(), x.end());
        });
        replay_opinions(tr, truth.payload, [&](std::size_t, std::span<const double> x) {
            replay_states.emplace_back(x.begin(), x.end());
        });
        CHECK(replay_states == sim_states);
    }
}

TEST_CASE("replay special cases")
{
    SUBCASE("without backfire, divergent events leave v unchanged")
    {
        const ModelConfig c = small_config(Variant::BCMU, 12, 40);
        const Trajectory tr = simulate(c, LatentParams{0.1, 0.5, BackfirePayload{true}});
        std::vector<double> prev = tr.x0;
        int negatives = 0;
        replay_opinions(tr, BackfirePayload{false}, [&](std::size_t i, std::span<const double> x) {
            const auto& ev = tr.events[i];
            if (ev.outcome.s_minus) {
                ++negatives;
                CHECK(x[static_cast<std::size_t>(ev.target())] == prev[static_cast<std::size_t>(ev.target())]);
            }
            prev.assign(x.begin(), x.end());
        });
        CHECK(negatives > 0);
    }
    SUBCASE("zero rates keep x0")
    {
        ModelConfig c = small_config(Variant::BCMb);
        c.mu_plus = 0.0;
        c.mu_minus = 0.0;
        const Trajectory tr = simulate(c, LatentParams{0.4, 0.6, std::monostate{}});
        replay_opinions(tr, std::monostate{}, [&](std::size_t, std::span<const double> x) {
            CHECK(std::vector<double>(x.begin(), x.end()) == tr.x0);
        });
    }
    SUBCASE("missing hypotheses are rejected")
    {
        const ModelConfig c = small_config(Variant::BCMI);
        const Trajectory tr = simulate(c, truth_for(Variant::BCMI, c.n_agents));
        CHECK_THROWS_AS(replay_opinions(tr, std::monostate{}), ConfigError);
    }
}

TEST_CASE("log-likelihood matches the direct per-event oracle")
{
    Rng rng(8);
    for (const Variant v : kAll) {
        for (const bool role_rates : {false, true}) {
            if (role_rates && v != Variant::BCMS)
                continue;
            CAPTURE(to_string(v));
            CAPTURE(role_rates);
            ModelConfig c = small_config(v);
            if (role_rates) {
                c.mu_plus_L = 0.02;
                c.mu_minus_L = 0.05;
            }
            const Trajectory tr = simulate(c, truth_for(v, c.n_agents));
            const LikelihoodData data(tr, PgabmConfig{});
            CHECK(data.role_dependent_path() == role_rates);
            for (int trial = 0; trial < 5; ++trial) {
                const auto theta = random_theta(theta_dim(v, c), rng);
                const ConstrainedParams p = transform(theta, v, c);
                const double expected = oracle_loglik(tr, p);
                CHECK(log_likelihood(data, p) == doctest::Approx(expected).epsilon(1e-10));
                CHECK(log_joint(data, theta) ==
                      doctest::Approx(expected + log_jacobian(theta, v)).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("empty trajectory leaves only the prior term")
{
    const ModelConfig c = small_config(Variant::BCMb);
    Trajectory tr = simulate(c, LatentParams{});
    tr.events.clear();
    const LikelihoodData data(tr, PgabmConfig{});
    const std::vector<double> theta{0.4, -1.2};
    CHECK(log_joint(data, theta) == doctest::Approx(log_jacobian(theta, Variant::BCMb)).epsilon(1e-15));
}

TEST_CASE("single positive event")
{
    ModelConfig c = small_config(Variant::BCMb, 2, 1);
    c.interactions_per_step = 1;
    Trajectory tr;
    tr.config = c;
    tr.x0 = {0.65, 0.5};
    InteractionEvent ev;
    ev.participants = {0, 1};
    ev.outcome.s_plus = true;
    tr.events = {ev};
    const LikelihoodData data(tr, PgabmConfig{});
    const std::vector<double> theta{0.0, 0.0}; // eps = (0.25, 0.75)
    const double p_minus = sig(-32 * (0.75 - 0.15));
    const double expected = std::log(0.960834277203236) + std::log(1 - p_minus) + log_jacobian(theta, Variant::BCMb);
    CHECK(log_joint(data, theta) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("discrete mixtures collapse at their endpoints")
{
    SUBCASE("BCMU: phi = 0 is the beta = 0 path, phi = 1 the beta = 1 path")
    {
        const ModelConfig c = small_config(Variant::BCMU, 12, 30);
        const Trajectory tr = simulate(c, LatentParams{0.2, 0.6, BackfirePayload{true}});
        const LikelihoodData data(tr, PgabmConfig{});
        ConstrainedParams p;
        p.variant = Variant::BCMU;
        p.eps_plus = 0.22;
        p.eps_minus = 0.63;
        for (const double phi : {0.0, 1.0}) {
            p.phi = {phi};
            // single-path oracle: a BCMb-style evaluation along the chosen path
            Trajectory path = tr;
            double expected = 0.0;
            std::vector<double> x = tr.x0;
            for (const auto& e : tr.events) {
                const double gap = opinion_gap(x, e.participants, 1);
                expected += log_bern(sig(32 * (p.eps_plus - std::abs(gap))), e.outcome.s_plus) +
                            log_bern(sig(-32 * (p.eps_minus - std::abs(gap))), e.outcome.s_minus);
                apply_outcome(x, e.target(), gap, e.outcome, Rates{c.mu_plus, phi == 0.0 ? 0.0 : c.mu_minus});
            }
            CHECK(log_likelihood(data, p) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("BCMS with every phi = 0 is BCMb with follower thresholds")
    {
        ModelConfig c = small_config(Variant::BCMS, 12, 30);
        c.mu_plus_L = 0.01;
        const Trajectory tr = simulate(c, truth_for(Variant::BCMS, c.n_agents));
        const LikelihoodData data(tr, PgabmConfig{});
        Trajectory as_b = tr;
        as_b.config.variant = Variant::BCMb;
        const LikelihoodData data_b(as_b, PgabmConfig{});

        ConstrainedParams p;
        p.variant = Variant::BCMS;
        p.eps_plus = 0.31;
        p.eps_minus = 0.68;
        p.eps_plus_L = 0.1;
        p.eps_minus_L = 0.9;
        p.phi.assign(12, 0.0);
        ConstrainedParams pb;
        pb.eps_plus = p.eps_plus;
        pb.eps_minus = p.eps_minus;
        const double reference = log_likelihood(data_b, pb);
        CHECK(log_likelihood(data, p) == doctest::Approx(reference).epsilon(1e-9));
        Rng rng(10);
        for (int trial = 0; trial < 5; ++trial) {
            const RoleNoise noise = RoleNoise::draw(12, rng);
            CHECK(log_likelihood(data, p, &noise) == doctest::Approx(reference).epsilon(1e-9));
        }
    }
    SUBCASE("BCMI with a one-hot weight is the single attention depth")
    {
        const ModelConfig c = small_config(Variant::BCMI, 12, 30);
        const Trajectory tr = simulate(c, truth_for(Variant::BCMI, c.n_agents));
        const LikelihoodData data(tr, PgabmConfig{});
        for (int k = 1; k <= c.feed_len; ++k) {
            ConstrainedParams p;
            p.variant = Variant::BCMI;
            p.eps_plus = 0.3;
            p.eps_minus = 0.7;
            p.phi.assign(static_cast<std::size_t>(c.feed_len), 0.0);
            p.phi[static_cast<std::size_t>(k - 1)] = 0.7;
            double expected = 0.0;
            replay_opinions(tr, AttentionPayload{k});
            std::vector<double> x = tr.x0;
            for (const auto& e : tr.events) {
                const double gap = opinion_gap(x, e.participants, k);
                expected += log_bern(sig(32 * (0.3 - std::abs(gap))), e.outcome.s_plus) +
                            log_bern(sig(-32 * (0.7 - std::abs(gap))), e.outcome.s_minus);
                apply_outcome(x, e.target(), gap, e.outcome, Rates{c.mu_plus, c.mu_minus});
            }
            CHECK(log_likelihood(data, p) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("BCMS relaxed roles follow the Gumbel-Softmax draw")
{
    ModelConfig c = small_config(Variant::BCMS, 8, 20);
    const Trajectory tr = simulate(c, truth_for(Variant::BCMS, c.n_agents));
    const LikelihoodData data(tr, PgabmConfig{});
    Rng rng(12);
    const auto theta = random_theta(theta_dim(Variant::BCMS, c), rng);
    ConstrainedParams p = transform(theta, Variant::BCMS, c);
    const RoleNoise noise = RoleNoise::draw(8, rng);
    // the relaxed role is the leader component of a two-class Gumbel-Softmax
    ConstrainedParams relaxed = p;
    for (std::size_t u = 0; u < 8; ++u) {
        const auto y = gumbel_softmax(std::vector<double>{p.phi[u], 1.0 - p.phi[u]}, 0.1,
                                      std::vector<double>{noise.leader[u], noise.follower[u]});
        relaxed.phi[u] = y[0];
    }
    CHECK(log_likelihood(data, p, &noise) == doctest::Approx(oracle_loglik(tr, relaxed)).epsilon(1e-9));
}

TEST_CASE("log_joint gradients match finite differences")
{
    Rng rng(13);
    for (const Variant v : kAll) {
        for (const bool role_rates : {false, true}) {
            if (role_rates && v != Variant::BCMS)
                continue;
            CAPTURE(to_string(v));
            ModelConfig c = small_config(v, 8, 10);
            if (role_rates)
                c.mu_minus_L = 0.02;
            const Trajectory tr = simulate(c, truth_for(v, c.n_agents));
            const LikelihoodData data(tr, PgabmConfig{});
            const RoleNoise noise = RoleNoise::draw(8, rng);
            const RoleNoise* np = v == Variant::BCMS ? &noise : nullptr;
            for (int trial = 0; trial < 3; ++trial) {
                const auto theta = random_theta(theta_dim(v, c), rng);
                ad::Tape tape;
                const ad::Var in = tape.input(theta);
                tape.backward(log_joint(data, in, np));
                const auto g = tape.grad(in);
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    auto up = theta, down = theta;
                    up[i] += 1e-5;
                    down[i] -= 1e-5;
                    const double fd = (log_joint(data, up, np) - log_joint(data, down, np)) / 2e-5;
                    CAPTURE(i);
                    if (std::abs(g[i]) < 1e-2)
                        CHECK(std::abs(g[i] - fd) <= 1e-6);
                    else
                        CHECK(std::abs(g[i] - fd) <= 1e-4 * std::abs(g[i]));
                }
            }
        }
    }
}

TEST_CASE("minibatch subsets rescale the likelihood")
{
    const ModelConfig c = small_config(Variant::BCMG, 12, 30);
    const Trajectory tr = simulate(c, truth_for(Variant::BCMG, c.n_agents));
    const LikelihoodData data(tr, PgabmConfig{});
    ConstrainedParams p;
    p.variant = Variant::BCMG;
    p.gamma = 0.33;

    std::vector<std::uint32_t> all(tr.events.size());
    for (std::uint32_t i = 0; i < all.size(); ++i)
        all[i] = i;
    CHECK(log_likelihood(data.subset(all), p) == doctest::Approx(log_likelihood(data, p)).epsilon(1e-13));

    const std::vector<std::uint32_t> some{1, 4, 5, 17, 30, 77};
    Trajectory picked = tr;
    double expected = 0.0;
    for (const std::uint32_t e : some) {
        // each event's own term: difference of prefix likelihoods
        Trajectory upto = tr, before = tr;
        upto.events.resize(e + 1);
        before.events.resize(e);
        expected += oracle_loglik(upto, p) - oracle_loglik(before, p);
    }
    expected *= static_cast<double>(tr.events.size()) / some.size();
    const LikelihoodData sub = data.subset(some);
    CHECK(sub.scale() == doctest::Approx(static_cast<double>(tr.events.size()) / 6));
    CHECK(log_likelihood(sub, p) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("non-finite terms name the event")
{
    const ModelConfig c = small_config(Variant::BCMG, 12, 30);
    const Trajectory tr = simulate(c, truth_for(Variant::BCMG, c.n_agents));
    std::size_t first_rewire = tr.events.size();
    for (std::size_t i = 0; i < tr.events.size(); ++i)
        if (tr.events[i].d == Dynamics::rewire) {
            first_rewire = i;
            break;
        }
    REQUIRE(first_rewire > 0);
    REQUIRE(first_rewire < tr.events.size());
    const LikelihoodData data(tr, PgabmConfig{});
    ConstrainedParams p;
    p.variant = Variant::BCMG;
    p.gamma = std::numeric_limits<double>::quiet_NaN();
    try {
        log_likelihood(data, p);
        FAIL("expected PoisonedValueError");
    } catch (const PoisonedValueError& e) {
        CHECK(e.event_index() == first_rewire);
    }
}

TEST_CASE("trajectories that do not fit the variant are rejected")
{
    const ModelConfig c = small_config(Variant::BCMI);
    Trajectory tr = simulate(c, truth_for(Variant::BCMI, c.n_agents));
    tr.events[3].participants.pop_back();
    CHECK_THROWS_AS(LikelihoodData(tr, PgabmConfig{}), ConfigError);

    Trajectory b = simulate(small_config(Variant::BCMb), LatentParams{});
    b.events[0].participants[0] = 99;
    CHECK_THROWS_AS(LikelihoodData(b, PgabmConfig{}), ConfigError);

    PgabmConfig bad;
    bad.tau = 0.0;
    CHECK_THROWS_AS(LikelihoodData(simulate(small_config(Variant::BCMb), LatentParams{}), bad), ConfigError);
}
