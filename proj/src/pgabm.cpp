#include "opvi/pgabm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

namespace opvi {

using ad::Tape;
using ad::Var;

namespace {

constexpr double kProbFloor = 1e-12;

std::size_t n_threshold_coords(Variant variant) { return variant == Variant::BCMS ? 4 : 2; }

double logit(double p) { return std::log(p) - std::log1p(-p); }

void warn_floor_once()
{
    static bool warned = false;
    if (!warned) {
        warned = true;
        std::clog << "opvi: warning: gumbel_softmax probabilities floored at 1e-12\n";
    }
}

} // namespace

void PgabmConfig::validate() const
{
    if (!(rho > 0.0) || !(tau > 0.0))
        throw ConfigError("rho and tau must be positive");
}

std::size_t theta_dim(Variant variant, const ModelConfig& config)
{
    switch (variant) {
    case Variant::BCMb: return 2;
    case Variant::BCMS: return static_cast<std::size_t>(config.n_agents) + 4;
    case Variant::BCMI: return 2 + static_cast<std::size_t>(config.feed_len);
    case Variant::BCMU:
    case Variant::BCMG: return 3;
    }
    return 0;
}

// ------------------------------------------------------------------ transforms

ConstrainedParams transform(std::span<const double> theta, Variant variant, const ModelConfig& config)
{
    const std::size_t m = theta_dim(variant, config);
    if (theta.size() != m)
        throw DimensionError("theta has dimension " + std::to_string(theta.size()) + ", " +
                             std::string(to_string(variant)) + " needs " + std::to_string(m));
    const auto s = [](double t) { return ad::sigmoid(t); };
    ConstrainedParams p;
    p.variant = variant;
    if (variant == Variant::BCMS) {
        p.eps_plus = s(theta[0]) / 2;
        p.eps_plus_L = s(theta[1]) / 2;
        p.eps_minus = s(theta[2]) / 2 + 0.5;
        p.eps_minus_L = s(theta[3]) / 2 + 0.5;
        p.phi.reserve(m - 4);
        for (std::size_t i = 4; i < m; ++i)
            p.phi.push_back(s(theta[i]));
        return p;
    }
    p.eps_plus = s(theta[0]) / 2;
    p.eps_minus = s(theta[1]) / 2 + 0.5;
    p.eps_plus_L = p.eps_plus;
    p.eps_minus_L = p.eps_minus;
    switch (variant) {
    case Variant::BCMI:
        for (std::size_t i = 2; i < m; ++i)
            p.phi.push_back(s(theta[i]));
        break;
    case Variant::BCMU: p.phi = {s(theta[2])}; break;
    case Variant::BCMG: p.gamma = s(theta[2]); break;
    default: break;
    }
    return p;
}

std::vector<double> inverse_transform(const ConstrainedParams& p, const ModelConfig& config)
{
    std::vector<double> theta;
    theta.reserve(theta_dim(p.variant, config));
    if (p.variant == Variant::BCMS) {
        theta = {logit(2 * p.eps_plus), logit(2 * p.eps_plus_L), logit(2 * p.eps_minus - 1),
                 logit(2 * p.eps_minus_L - 1)};
    } else {
        theta = {logit(2 * p.eps_plus), logit(2 * p.eps_minus - 1)};
    }
    if (p.variant == Variant::BCMG)
        theta.push_back(logit(p.gamma));
    for (const double f : p.phi)
        theta.push_back(logit(f));
    if (theta.size() != theta_dim(p.variant, config))
        throw DimensionError("constrained parameters do not match the configuration");
    return theta;
}

double log_jacobian(std::span<const double> theta, Variant variant)
{
    const std::size_t half = n_threshold_coords(variant);
    double total = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        total += ad::log_sigmoid(theta[i]) + ad::log_sigmoid(-theta[i]);
        if (i < half)
            total += std::log(0.5);
    }
    return total;
}

Var log_jacobian(Var theta, Variant variant)
{
    Tape& tape = *theta.tape();
    const std::size_t m = theta.size();
    if (m == 0)
        return tape.constant(0.0);
    const Var terms = ad::log_sigmoid(theta) + ad::log_sigmoid(-theta);
    const double half = static_cast<double>(std::min(m, n_threshold_coords(variant)));
    return ad::sum(terms) + half * std::log(0.5);
}

ConstrainedVars transform(Var theta, Variant variant, const ModelConfig& config)
{
    const std::size_t m = theta_dim(variant, config);
    if (theta.size() != m)
        throw DimensionError("theta has dimension " + std::to_string(theta.size()) + ", " +
                             std::string(to_string(variant)) + " needs " + std::to_string(m));
    const auto half_sigmoid = [&](std::size_t i) { return ad::sigmoid(ad::element(theta, i)) * 0.5; };
    ConstrainedVars cv;
    if (variant == Variant::BCMS) {
        cv.eps_plus = half_sigmoid(0);
        cv.eps_plus_L = half_sigmoid(1);
        cv.eps_minus = half_sigmoid(2) + 0.5;
        cv.eps_minus_L = half_sigmoid(3) + 0.5;
        const Var roles = ad::slice(theta, 4, m - 4);
        cv.log_phi = ad::log_sigmoid(roles);
        cv.log_phi_compl = ad::log_sigmoid(-roles);
        return cv;
    }
    cv.eps_plus = half_sigmoid(0);
    cv.eps_minus = half_sigmoid(1) + 0.5;
    switch (variant) {
    case Variant::BCMI: cv.phi = ad::sigmoid(ad::slice(theta, 2, m - 2)); break;
    case Variant::BCMU: cv.phi = ad::sigmoid(ad::element(theta, 2)); break;
    case Variant::BCMG: cv.gamma = ad::sigmoid(ad::element(theta, 2)); break;
    default: break;
    }
    return cv;
}

ConstrainedVars constant_params(Tape& tape, const ConstrainedParams& p)
{
    ConstrainedVars cv;
    cv.eps_plus = tape.constant(p.eps_plus);
    cv.eps_minus = tape.constant(p.eps_minus);
    switch (p.variant) {
    case Variant::BCMS: {
        cv.eps_plus_L = tape.constant(p.eps_plus_L);
        cv.eps_minus_L = tape.constant(p.eps_minus_L);
        std::vector<double> lp(p.phi.size());
        std::vector<double> lq(p.phi.size());
        for (std::size_t i = 0; i < p.phi.size(); ++i) {
            lp[i] = std::log(std::max(p.phi[i], kProbFloor));
            lq[i] = std::log(std::max(1.0 - p.phi[i], kProbFloor));
        }
        cv.log_phi = tape.constant(lp);
        cv.log_phi_compl = tape.constant(lq);
        break;
    }
    case Variant::BCMI:
    case Variant::BCMU: cv.phi = tape.constant(p.phi); break;
    case Variant::BCMG: cv.gamma = tape.constant(p.gamma); break;
    default: break;
    }
    return cv;
}

// ------------------------------------------------------------------ kappa, gumbel

Kappa kappa(std::span<const double> x, const InteractionEvent& event, const ConstrainedParams& params,
            const ModelConfig& config, const PgabmConfig& pg)
{
    const auto s = [](double z) { return ad::sigmoid(z); };
    const double rho = pg.rho;
    Kappa k;
    if (params.variant == Variant::BCMI) {
        double norm = 0.0;
        for (const double f : params.phi)
            norm += f;
        for (std::size_t j = 0; j < params.phi.size(); ++j) {
            const double gap = std::abs(opinion_gap(x, event.participants, static_cast<int>(j) + 1));
            const double w = params.phi[j] / norm;
            k.p_plus += w * s(rho * (params.eps_plus - gap));
            k.p_minus += w * s(-rho * (params.eps_minus - gap));
        }
        return k;
    }

    const std::span<const int> pair = std::span<const int>(event.participants).first(2);
    const double gap = std::abs(opinion_gap(x, pair, 1));
    double eps_plus = params.eps_plus;
    double eps_minus = params.eps_minus;
    if (params.variant == Variant::BCMS) {
        const double r = params.phi[static_cast<std::size_t>(pair[1])];
        eps_plus = r * params.eps_plus_L + (1 - r) * params.eps_plus;
        eps_minus = r * params.eps_minus_L + (1 - r) * params.eps_minus;
    }
    const double update = config.variant == Variant::BCMG && event.d == Dynamics::rewire ? 0.0 : 1.0;
    k.p_plus = s(rho * (eps_plus - gap)) * update;
    k.p_minus = s(-rho * (eps_minus - gap)) * update;
    if (params.variant == Variant::BCMG)
        k.p_rewire = s(-rho * (params.gamma - gap)) * (1.0 - update);
    return k;
}

std::vector<double> gumbel_softmax(std::span<const double> probs, double tau, std::span<const double> noise)
{
    if (probs.size() != noise.size() || probs.empty())
        throw DimensionError("gumbel_softmax: probs and noise must have equal, nonzero length");
    if (!(tau > 0.0))
        throw ConfigError("gumbel_softmax: tau must be positive");
    std::vector<double> logits(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) {
        double p = probs[k];
        if (p < kProbFloor) {
            warn_floor_once();
            p = kProbFloor;
        }
        logits[k] = (std::log(p) + noise[k]) / tau;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double norm = 0.0;
    for (double& l : logits) {
        l = std::exp(l - top);
        norm += l;
    }
    for (double& l : logits)
        l /= norm;
    return logits;
}

RoleNoise RoleNoise::draw(std::size_t n_agents, Rng& rng)
{
    RoleNoise noise;
    noise.leader.resize(n_agents);
    noise.follower.resize(n_agents);
    for (std::size_t i = 0; i < n_agents; ++i) {
        noise.leader[i] = rng.gumbel();
        noise.follower[i] = rng.gumbel();
    }
    return noise;
}

// ------------------------------------------------------------------ replay

std::vector<double> replay_opinions(const Trajectory& traj, const VariantPayload& hypothesis,
                                    const EventObserver& observer)
{
    const ModelConfig& config = traj.config;
    std::vector<double> x = traj.x0;
    std::vector<double> gaps;
    gaps.reserve(traj.events.size());

    const auto* roles = std::get_if<RolePayload>(&hypothesis);
    const auto* attention = std::get_if<AttentionPayload>(&hypothesis);
    const auto* backfire = std::get_if<BackfirePayload>(&hypothesis);
    if (config.variant == Variant::BCMI && attention == nullptr)
        throw ConfigError("replay: BCMI needs an attention-depth hypothesis");
    if (config.variant == Variant::BCMU && backfire == nullptr)
        throw ConfigError("replay: BCMU needs a beta hypothesis");

    const int attend = attention != nullptr ? attention->k_attend : 1;
    for (std::size_t i = 0; i < traj.events.size(); ++i) {
        const InteractionEvent& ev = traj.events[i];
        const std::span<const int> interacting =
            config.variant == Variant::BCMG ? std::span<const int>(ev.participants).first(2)
                                            : std::span<const int>(ev.participants);
        const int v = interacting.back();
        const double gap = opinion_gap(x, interacting, config.variant == Variant::BCMI ? attend : 1);
        gaps.push_back(gap);
        if (ev.d == Dynamics::update) {
            Rates rates{config.mu_plus, config.mu_minus};
            if (roles != nullptr && !roles->leader.empty() && roles->leader[static_cast<std::size_t>(v)])
                rates = {config.mu_plus_L, config.mu_minus_L};
            if (backfire != nullptr && !backfire->beta)
                rates.minus = 0.0;
            apply_outcome(x, v, gap, ev.outcome, rates);
        }
        if (observer)
            observer(i, x);
    }
    return gaps;
}

// ------------------------------------------------------------------ likelihood data

namespace {

void check_event_shape(const Trajectory& traj, std::size_t i)
{
    const ModelConfig& c = traj.config;
    const InteractionEvent& ev = traj.events[i];
    const std::size_t n = ev.participants.size();
    bool ok = false;
    switch (c.variant) {
    case Variant::BCMI: ok = n == static_cast<std::size_t>(c.feed_len) + 1; break;
    case Variant::BCMG: ok = n == 2 || (n == 4 && ev.d == Dynamics::rewire); break;
    default: ok = n == 2 && ev.d == Dynamics::update; break;
    }
    for (const int a : ev.participants)
        ok = ok && a >= 0 && a < c.n_agents;
    if (!ok)
        throw ConfigError("trajectory event " + std::to_string(i) + " does not match variant " +
                          std::string(to_string(c.variant)));
}

} // namespace

LikelihoodData::LikelihoodData(const Trajectory& traj, const PgabmConfig& pg)
    : traj_(&traj), pg_(pg), variant_(traj.config.variant), n_events_(traj.events.size())
{
    pg.validate();
    traj.config.validate();
    if (traj.x0.size() != static_cast<std::size_t>(traj.config.n_agents))
        throw ConfigError("trajectory x0 length does not match n_agents");

    const double rho = pg.rho;
    for (std::size_t i = 0; i < traj.events.size(); ++i) {
        check_event_shape(traj, i);
        const InteractionEvent& ev = traj.events[i];
        const int v = ev.participants.size() == 4 ? ev.participants[1]
                      : variant_ == Variant::BCMG ? ev.participants[1]
                                                  : ev.participants.back();
        Block& block = ev.d == Dynamics::rewire ? rewire_ : update_;
        block.event.push_back(static_cast<std::uint32_t>(i));
        block.target.push_back(static_cast<std::uint32_t>(v));
        const double sp = ev.outcome.s_plus ? 1.0 : -1.0;
        const double sm = (ev.d == Dynamics::rewire ? ev.outcome.s_rewire : ev.outcome.s_minus) ? 1.0 : -1.0;
        block.sign_plus.push_back(sp);
        block.sign_minus.push_back(sm);
        block.coef_plus.push_back(rho * sp);
        block.coef_minus.push_back(-rho * sm);
    }

    role_dependent_path_ = variant_ == Variant::BCMS &&
                           (traj.config.mu_plus_L != traj.config.mu_plus ||
                            traj.config.mu_minus_L != traj.config.mu_minus);

    std::vector<VariantPayload> hypotheses;
    switch (variant_) {
    case Variant::BCMI:
        for (int k = 1; k <= traj.config.feed_len; ++k)
            hypotheses.emplace_back(AttentionPayload{k});
        break;
    case Variant::BCMU:
        hypotheses.emplace_back(BackfirePayload{false});
        hypotheses.emplace_back(BackfirePayload{true});
        break;
    case Variant::BCMS:
        hypotheses.emplace_back(default_payload(Variant::BCMS, traj.config.n_agents));
        break;
    default: hypotheses.emplace_back(std::monostate{}); break;
    }
    n_paths_ = hypotheses.size();
    for (std::size_t p = 0; p < hypotheses.size(); ++p) {
        const std::vector<double> gaps = replay_opinions(traj, hypotheses[p]);
        fill_offsets(update_, p, gaps, false);
        fill_offsets(rewire_, p, gaps, true);
    }
}

void LikelihoodData::fill_offsets(Block& block, std::size_t path, std::span<const double> gaps, bool)
{
    block.offset_plus.resize(n_paths_);
    block.offset_minus.resize(n_paths_);
    auto& op = block.offset_plus[path];
    auto& om = block.offset_minus[path];
    op.resize(block.size());
    om.resize(block.size());
    for (std::size_t r = 0; r < block.size(); ++r) {
        const double dist = std::abs(gaps[block.event[r]]);
        op[r] = -block.coef_plus[r] * dist;
        om[r] = -block.coef_minus[r] * dist;
    }
}

LikelihoodData LikelihoodData::subset(std::span<const std::uint32_t> events) const
{
    LikelihoodData out;
    out.traj_ = traj_;
    out.pg_ = pg_;
    out.variant_ = variant_;
    out.n_events_ = n_events_;
    out.n_paths_ = n_paths_;
    out.role_dependent_path_ = role_dependent_path_;
    out.subset_events_.assign(events.begin(), events.end());
    out.scale_ = events.empty() ? 0.0 : static_cast<double>(n_events_) / static_cast<double>(events.size());

    const auto take = [&](const Block& src, Block& dst) {
        dst.offset_plus.resize(src.offset_plus.size());
        dst.offset_minus.resize(src.offset_minus.size());
        std::size_t e = 0;
        for (std::size_t r = 0; r < src.size(); ++r) {
            while (e < events.size() && events[e] < src.event[r])
                ++e;
            if (e == events.size())
                break;
            if (events[e] != src.event[r])
                continue;
            dst.event.push_back(src.event[r]);
            dst.target.push_back(src.target[r]);
            dst.sign_plus.push_back(src.sign_plus[r]);
            dst.sign_minus.push_back(src.sign_minus[r]);
            dst.coef_plus.push_back(src.coef_plus[r]);
            dst.coef_minus.push_back(src.coef_minus[r]);
            for (std::size_t p = 0; p < src.offset_plus.size(); ++p) {
                dst.offset_plus[p].push_back(src.offset_plus[p][r]);
                dst.offset_minus[p].push_back(src.offset_minus[p][r]);
            }
        }
    };
    take(update_, out.update_);
    take(rewire_, out.rewire_);
    return out;
}

// ------------------------------------------------------------------ log-likelihood

namespace {

// Per-event |gap| on the tape, replaying opinions with relaxed per-agent
// rates mu_F + r (mu_L - mu_F).
Var relaxed_role_gaps(Tape& tape, const Trajectory& traj, Var relaxed_roles)
{
    const ModelConfig& c = traj.config;
    const auto n = static_cast<std::size_t>(c.n_agents);
    const Var rate_plus = relaxed_roles * (c.mu_plus_L - c.mu_plus) + c.mu_plus;
    const Var rate_minus = relaxed_roles * (c.mu_minus_L - c.mu_minus) + c.mu_minus;
    const Var x0 = tape.constant(traj.x0);
    const Var zero = tape.constant(0.0);
    const Var one = tape.constant(1.0);

    std::vector<Var> x(n), rp(n), rm(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = ad::element(x0, i);
        rp[i] = ad::element(rate_plus, i);
        rm[i] = ad::element(rate_minus, i);
    }
    std::vector<Var> gaps;
    gaps.reserve(traj.events.size());
    for (const InteractionEvent& ev : traj.events) {
        const auto u = static_cast<std::size_t>(ev.participants[0]);
        const auto v = static_cast<std::size_t>(ev.participants[1]);
        const Var diff = x[u] - x[v];
        gaps.push_back(ad::abs(diff));
        if (!ev.outcome.s_plus && !ev.outcome.s_minus)
            continue;
        Var next = x[v];
        if (ev.outcome.s_plus)
            next = next + rp[v] * diff;
        if (ev.outcome.s_minus)
            next = next - rm[v] * diff;
        x[v] = ad::max(ad::min(next, one), zero);
    }
    return tape.concat(gaps);
}

struct RowTerms {
    Var values;                              // per-row log-probabilities
    const std::vector<std::uint32_t>* events;
};

Var bernoulli_logit(Tape& tape, std::span<const double> coef, Var threshold, std::span<const double> offset)
{
    return ad::log_sigmoid(tape.constant_ref(coef) * threshold + tape.constant_ref(offset));
}

// log sum_k w_k exp(lp_k), with the per-row max held constant (the
// expression does not depend on it).
Var log_mixture(Tape& tape, const std::vector<Var>& lp, const std::vector<Var>& weights)
{
    const std::size_t rows = lp.front().size();
    std::vector<double> top(rows, -std::numeric_limits<double>::infinity());
    for (const Var& l : lp) {
        const auto v = l.value();
        for (std::size_t r = 0; r < rows; ++r)
            top[r] = std::max(top[r], v[r]);
    }
    for (double& t : top)
        if (!std::isfinite(t))
            t = 0.0;
    const Var m = tape.constant(top);
    Var mix = weights[0] * ad::exp(lp[0] - m);
    for (std::size_t k = 1; k < lp.size(); ++k)
        mix = mix + weights[k] * ad::exp(lp[k] - m);
    return ad::log(mix) + m;
}

} // namespace

Var log_likelihood(const LikelihoodData& data, const ConstrainedVars& params, const RoleNoise* noise)
{
    Tape& tape = *params.eps_plus.tape();
    const ModelConfig& config = data.config();
    const LikelihoodData::Block& up = data.update_block();
    const LikelihoodData::Block& rw = data.rewire_block();
    std::vector<RowTerms> terms;

    if (up.size() > 0) {
        switch (data.variant()) {
        case Variant::BCMS: {
            Var roles;
            if (noise != nullptr) {
                const auto n = static_cast<std::size_t>(config.n_agents);
                if (noise->leader.size() != n || noise->follower.size() != n)
                    throw DimensionError("role noise must have one draw pair per agent");
                const Var logits = params.log_phi + tape.constant(noise->leader) - params.log_phi_compl -
                                   tape.constant(noise->follower);
                roles = ad::sigmoid(logits * (1.0 / data.pgabm().tau));
            } else {
                roles = ad::exp(params.log_phi);
            }
            const Var r = ad::gather(roles, up.target);
            const Var eps_plus = params.eps_plus + r * (params.eps_plus_L - params.eps_plus);
            const Var eps_minus = params.eps_minus + r * (params.eps_minus_L - params.eps_minus);
            Var lp;
            if (data.role_dependent_path()) {
                const Var gaps = ad::gather(relaxed_role_gaps(tape, data.trajectory(), roles), up.event);
                lp = ad::log_sigmoid(tape.constant_ref(up.coef_plus) * (eps_plus - gaps)) +
                     ad::log_sigmoid(tape.constant_ref(up.coef_minus) * (eps_minus - gaps));
            } else {
                lp = ad::log_sigmoid(tape.constant_ref(up.coef_plus) * eps_plus +
                                     tape.constant_ref(up.offset_plus[0])) +
                     ad::log_sigmoid(tape.constant_ref(up.coef_minus) * eps_minus +
                                     tape.constant_ref(up.offset_minus[0]));
            }
            terms.push_back({lp, &up.event});
            break;
        }
        case Variant::BCMI:
        case Variant::BCMU: {
            std::vector<Var> lp, weights;
            for (std::size_t p = 0; p < data.n_paths(); ++p)
                lp.push_back(bernoulli_logit(tape, up.coef_plus, params.eps_plus, up.offset_plus[p]) +
                             bernoulli_logit(tape, up.coef_minus, params.eps_minus, up.offset_minus[p]));
            if (data.variant() == Variant::BCMI) {
                const Var normalized = params.phi / ad::sum(params.phi);
                for (std::size_t p = 0; p < data.n_paths(); ++p)
                    weights.push_back(ad::element(normalized, p));
            } else {
                weights = {1.0 - params.phi, params.phi};
            }
            terms.push_back({log_mixture(tape, lp, weights), &up.event});
            break;
        }
        default: {
            const Var lp = bernoulli_logit(tape, up.coef_plus, params.eps_plus, up.offset_plus[0]) +
                           bernoulli_logit(tape, up.coef_minus, params.eps_minus, up.offset_minus[0]);
            terms.push_back({lp, &up.event});
            break;
        }
        }
    }
    if (rw.size() > 0) {
        if (!params.gamma.valid())
            throw ConfigError("rewire events need a gamma parameter");
        terms.push_back({bernoulli_logit(tape, rw.coef_minus, params.gamma, rw.offset_minus[0]), &rw.event});
    }

    if (terms.empty())
        return tape.constant(0.0);
    Var total = ad::sum(terms[0].values);
    for (std::size_t t = 1; t < terms.size(); ++t)
        total = total + ad::sum(terms[t].values);

    if (!std::isfinite(total.scalar())) {
        std::size_t worst = std::numeric_limits<std::size_t>::max();
        for (const RowTerms& t : terms) {
            const auto v = t.values.value();
            for (std::size_t r = 0; r < v.size(); ++r)
                if (!std::isfinite(v[r])) {
                    worst = std::min<std::size_t>(worst, (*t.events)[r]);
                    break;
                }
        }
        throw PoisonedValueError(worst, "non-finite log-likelihood at event " + std::to_string(worst));
    }
    return data.scale() == 1.0 ? total : total * data.scale();
}

Var log_joint(const LikelihoodData& data, Var theta, const RoleNoise* noise)
{
    const ConstrainedVars cv = transform(theta, data.variant(), data.config());
    return log_likelihood(data, cv, noise) + log_jacobian(theta, data.variant());
}

double log_joint(const LikelihoodData& data, std::span<const double> theta, const RoleNoise* noise)
{
    Tape tape;
    return log_joint(data, tape.input(theta), noise).scalar();
}

double log_likelihood(const LikelihoodData& data, const ConstrainedParams& params, const RoleNoise* noise)
{
    if (params.variant != data.variant())
        throw ConfigError("parameters and trajectory belong to different variants");
    Tape tape;
    return log_likelihood(data, constant_params(tape, params), noise).scalar();
}

} // namespace opvi
