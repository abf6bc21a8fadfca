#include "opvi/abm_sim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

namespace opvi {

std::string_view to_string(Variant v) noexcept
{
    switch (v) {
    case Variant::BCMb: return "BCMb";
    case Variant::BCMS: return "BCMS";
    case Variant::BCMI: return "BCMI";
    case Variant::BCMU: return "BCMU";
    case Variant::BCMG: return "BCMG";
    }
    return "?";
}

Variant parse_variant(std::string_view name)
{
    std::string key;
    for (const char c : name)
        if (c != '-' && c != '_')
            key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (key == "bcmb") return Variant::BCMb;
    if (key == "bcms") return Variant::BCMS;
    if (key == "bcmi") return Variant::BCMI;
    if (key == "bcmu") return Variant::BCMU;
    if (key == "bcmg") return Variant::BCMG;
    throw ConfigError("unknown variant '" + std::string(name) + "'");
}

namespace {

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw ConfigError(message);
}

} // namespace

void ModelConfig::validate() const
{
    require(n_agents >= 2, "n_agents must be >= 2");
    require(n_steps >= 1, "n_steps must be >= 1");
    require(interactions_per_step >= 1, "interactions_per_step must be >= 1");
    require(in_unit(mu_plus) && in_unit(mu_minus), "mu_plus/mu_minus must lie in [0,1]");
    switch (variant) {
    case Variant::BCMS:
        require(in_unit(mu_plus_L) && in_unit(mu_minus_L), "leader rates must lie in [0,1]");
        require(mu_plus >= mu_plus_L && mu_minus >= mu_minus_L,
                "BCMS: follower rates must dominate leader rates");
        break;
    case Variant::BCMI:
        require(feed_len >= 2, "BCMI: feed_len must be >= 2");
        require(n_agents >= feed_len + 1, "BCMI: need n_agents >= feed_len + 1");
        break;
    case Variant::BCMG:
        require(in_unit(xi), "BCMG: xi must lie in [0,1]");
        require(graph_density > 0.0 && graph_density <= 1.0, "BCMG: graph_density must lie in (0,1]");
        break;
    default: break;
    }
}

void LatentParams::validate(const ModelConfig& config) const
{
    require(eps_plus >= 0.0 && eps_plus <= 0.5, "eps_plus must lie in [0,0.5]");
    require(eps_minus >= 0.5 && eps_minus <= 1.0, "eps_minus must lie in [0.5,1]");
    switch (config.variant) {
    case Variant::BCMb:
        require(std::holds_alternative<std::monostate>(payload), "BCMb takes no variant payload");
        break;
    case Variant::BCMS: {
        const auto* p = std::get_if<RolePayload>(&payload);
        require(p != nullptr, "BCMS requires a role payload");
        require(p->leader.size() == static_cast<std::size_t>(config.n_agents), "BCMS: roles must have n_agents entries");
        require(p->eps_plus_L >= 0.0 && p->eps_plus_L <= 0.5, "eps_plus_L must lie in [0,0.5]");
        require(p->eps_minus_L >= 0.5 && p->eps_minus_L <= 1.0, "eps_minus_L must lie in [0.5,1]");
        require(eps_plus >= p->eps_plus_L && eps_minus <= p->eps_minus_L,
                "BCMS: follower thresholds must be at least as permissive as leader thresholds");
        break;
    }
    case Variant::BCMI: {
        const auto* p = std::get_if<AttentionPayload>(&payload);
        require(p != nullptr, "BCMI requires an attention payload");
        require(p->k_attend >= 1 && p->k_attend <= config.feed_len, "BCMI: k_attend must lie in [1, feed_len]");
        break;
    }
    case Variant::BCMU:
        require(std::holds_alternative<BackfirePayload>(payload), "BCMU requires a backfire payload");
        break;
    case Variant::BCMG: {
        const auto* p = std::get_if<RewirePayload>(&payload);
        require(p != nullptr, "BCMG requires a rewiring payload");
        require(in_unit(p->gamma), "gamma must lie in [0,1]");
        break;
    }
    }
}

const RolePayload& LatentParams::roles() const { return std::get<RolePayload>(payload); }
const AttentionPayload& LatentParams::attention() const { return std::get<AttentionPayload>(payload); }
const BackfirePayload& LatentParams::backfire() const { return std::get<BackfirePayload>(payload); }
const RewirePayload& LatentParams::rewiring() const { return std::get<RewirePayload>(payload); }

VariantPayload default_payload(Variant variant, int n_agents)
{
    switch (variant) {
    case Variant::BCMS: {
        RolePayload p;
        p.leader.assign(static_cast<std::size_t>(std::max(n_agents, 0)), false);
        return p;
    }
    case Variant::BCMI: return AttentionPayload{};
    case Variant::BCMU: return BackfirePayload{};
    case Variant::BCMG: return RewirePayload{};
    default: return std::monostate{};
    }
}

int InteractionEvent::target() const
{
    // BCM-G rewires append (w, z) after (u, v).
    if (participants.size() == 4 && d == Dynamics::rewire)
        return participants[1];
    return participants.back();
}

double opinion_gap(std::span<const double> x, std::span<const int> participants, int attend)
{
    const int v = participants.back();
    double mean = 0.0;
    for (int j = 0; j < attend; ++j)
        mean += x[static_cast<std::size_t>(participants[static_cast<std::size_t>(j)])];
    mean /= attend;
    return mean - x[static_cast<std::size_t>(v)];
}

void apply_outcome(std::span<double> x, int v, double gap, const Outcome& outcome, Rates rates)
{
    double next = x[static_cast<std::size_t>(v)];
    if (outcome.s_plus)
        next += rates.plus * gap;
    if (outcome.s_minus)
        next -= rates.minus * gap;
    x[static_cast<std::size_t>(v)] = std::max(0.0, std::min(next, 1.0));
}

Outcome step_update(std::span<double> x, std::span<const int> participants, Dynamics d,
                    const LatentParams& latents, const ModelConfig& config)
{
    const int v = config.variant == Variant::BCMG ? participants[1] : participants.back();
    const std::span<const int> interacting =
        config.variant == Variant::BCMG ? participants.first(2) : participants;
    const int attend = config.variant == Variant::BCMI ? latents.attention().k_attend : 1;
    const double gap = opinion_gap(x, interacting, attend);
    const double dist = std::abs(gap);

    Outcome out;
    if (d == Dynamics::rewire) {
        out.s_rewire = dist > latents.rewiring().gamma;
        return out;
    }

    double eps_plus = latents.eps_plus;
    double eps_minus = latents.eps_minus;
    Rates rates{config.mu_plus, config.mu_minus};
    if (config.variant == Variant::BCMS) {
        const RolePayload& roles = latents.roles();
        if (roles.leader[static_cast<std::size_t>(v)]) {
            eps_plus = roles.eps_plus_L;
            eps_minus = roles.eps_minus_L;
            rates = {config.mu_plus_L, config.mu_minus_L};
        }
    } else if (config.variant == Variant::BCMU && !latents.backfire().beta) {
        rates.minus = 0.0;
    }

    if (dist <= eps_plus)
        out.s_plus = true;
    else if (dist >= eps_minus)
        out.s_minus = true;
    apply_outcome(x, v, gap, out, rates);
    return out;
}

namespace {

void draw_pair(Rng& rng, int n, std::vector<int>& participants)
{
    const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
    if (u >= v)
        ++u;
    participants.assign({u, v});
}

// F distinct feed agents, none equal to v; v is appended last.
void draw_feed(Rng& rng, int n, int feed_len, std::vector<int>& participants)
{
    const int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    participants.clear();
    while (static_cast<int>(participants.size()) < feed_len) {
        const int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        if (u == v || std::find(participants.begin(), participants.end(), u) != participants.end())
            continue;
        participants.push_back(u);
    }
    participants.push_back(v);
}

} // namespace

Trajectory simulate(const ModelConfig& config, const LatentParams& latents, const EventObserver& observer)
{
    config.validate();
    latents.validate(config);

    Trajectory traj;
    traj.config = config;

    const auto n = static_cast<std::size_t>(config.n_agents);
    Rng init = Rng::stream(config.seed, 0);
    traj.x0.resize(n);
    for (double& xi : traj.x0)
        xi = init.uniform();

    std::optional<Graph> graph;
    if (config.variant == Variant::BCMG) {
        traj.initial_edges = init_graph(config.n_agents, config.graph_density, hash_seed(config.seed, 0x47ULL));
        if (traj.initial_edges.size() < 2)
            throw InfeasibleRewireError("BCMG: initial graph has fewer than 2 edges");
        graph.emplace(config.n_agents, traj.initial_edges);
    }

    std::vector<double> x = traj.x0;
    traj.events.reserve(config.n_events());
    std::vector<int> participants;
    for (int t = 0; t < config.n_steps; ++t) {
        Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(t) + 1);
        for (int i = 0; i < config.interactions_per_step; ++i) {
            InteractionEvent ev;
            ev.step = t;
            switch (config.variant) {
            case Variant::BCMI:
                draw_feed(rng, config.n_agents, config.feed_len, participants);
                break;
            case Variant::BCMG: {
                const auto [u, v] = graph->sample_oriented_edge(rng);
                participants.assign({u, v});
                ev.d = rng.uniform() < config.xi ? Dynamics::update : Dynamics::rewire;
                break;
            }
            default:
                draw_pair(rng, config.n_agents, participants);
                break;
            }

            ev.outcome = step_update(x, participants, ev.d, latents, config);

            if (ev.d == Dynamics::rewire && ev.outcome.s_rewire) {
                const int u = participants[0];
                const int v = participants[1];
                for (int attempt = 0; attempt < kRewireRetries; ++attempt) {
                    const auto [w, z] = graph->sample_oriented_edge(rng);
                    if (graph->rewire(u, v, w, z)) {
                        participants.assign({u, v, w, z});
                        break;
                    }
                }
            }
            ev.participants = participants;
            traj.events.push_back(std::move(ev));
            if (observer)
                observer(traj.events.size() - 1, x);
        }
    }
    return traj;
}

} // namespace opvi
