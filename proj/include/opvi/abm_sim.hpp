#ifndef OPVI_ABM_SIM_HPP
#define OPVI_ABM_SIM_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "opvi/graph.hpp"

namespace opvi {

/// Bounded-confidence model with backfire and its four extensions.
enum class Variant { BCMb, BCMS, BCMI, BCMU, BCMG };

std::string_view to_string(Variant v) noexcept;
/// Accepts "BCMb", "BCM-b", "bcmb", ... Throws ConfigError otherwise.
Variant parse_variant(std::string_view name);

/// Observed (PGM) parameters of a run. Leader rates and feed length are
/// only read by the variants that use them.
struct ModelConfig {
    Variant variant = Variant::BCMb;
    int n_agents = 100;
    int n_steps = 128;
    int interactions_per_step = 10;
    double mu_plus = 0.02;
    double mu_minus = 0.02;
    double mu_plus_L = 0.02;
    double mu_minus_L = 0.02;
    int feed_len = 10;
    double xi = 0.5;
    double graph_density = 0.1;
    std::uint64_t seed = 0;

    /// Throws ConfigError on any violated invariant.
    void validate() const;
    std::size_t n_events() const noexcept
    {
        return static_cast<std::size_t>(n_steps) * static_cast<std::size_t>(interactions_per_step);
    }
    bool operator==(const ModelConfig&) const = default;
};

struct RolePayload {
    double eps_plus_L = 0.15;
    double eps_minus_L = 0.85;
    std::vector<bool> leader; ///< per agent, true = leader
    bool operator==(const RolePayload&) const = default;
};

struct AttentionPayload {
    int k_attend = 1; ///< number of leading feed entries v attends to
    bool operator==(const AttentionPayload&) const = default;
};

struct BackfirePayload {
    bool beta = true;
    bool operator==(const BackfirePayload&) const = default;
};

struct RewirePayload {
    double gamma = 0.5;
    bool operator==(const RewirePayload&) const = default;
};

using VariantPayload =
    std::variant<std::monostate, RolePayload, AttentionPayload, BackfirePayload, RewirePayload>;

/// Ground-truth ABM parameters. For BCM-S, eps_plus/eps_minus are the
/// follower thresholds.
struct LatentParams {
    double eps_plus = 0.25;
    double eps_minus = 0.75;
    VariantPayload payload;

    void validate(const ModelConfig& config) const;
    bool operator==(const LatentParams&) const = default;

    const RolePayload& roles() const;
    const AttentionPayload& attention() const;
    const BackfirePayload& backfire() const;
    const RewirePayload& rewiring() const;
};

/// Variant payload matching `variant` with library defaults.
VariantPayload default_payload(Variant variant, int n_agents);

enum class Dynamics : std::uint8_t { update = 0, rewire = 1 };

struct Outcome {
    bool s_plus = false;
    bool s_minus = false;
    bool s_rewire = false;
    bool operator==(const Outcome&) const = default;
};

/**
 * One observed interaction. `participants` ends with the updated agent v:
 * (u, v) for BCM-b/S/U, (u_1..u_F, v) for BCM-I. BCM-G stores (u, v) or,
 * after a successful rewire, (u, v, w, z).
 */
struct InteractionEvent {
    int step = 0;
    std::vector<int> participants;
    Dynamics d = Dynamics::update;
    Outcome outcome;

    int target() const;
    int source() const { return participants.front(); }
    bool operator==(const InteractionEvent&) const = default;
};

struct Trajectory {
    ModelConfig config;
    std::vector<double> x0;
    std::vector<InteractionEvent> events;
    std::vector<Edge> initial_edges; ///< BCM-G only

    bool operator==(const Trajectory&) const = default;
};

/// Convergence/divergence rates applied to the updated agent.
struct Rates {
    double plus = 0.0;
    double minus = 0.0;
};

/// Signed opinion gap seen by v: (mean of attended sources) - x_v.
/// `attend` is the number of leading sources to average (BCM-I); pass 1
/// for pairwise variants.
double opinion_gap(std::span<const double> x, std::span<const int> participants, int attend);

/// Applies an observed outcome to x[v] and clamps to [0,1]. Both branches
/// apply when both signs are set (possible only under the relaxed model).
void apply_outcome(std::span<double> x, int v, double gap, const Outcome& outcome, Rates rates);

/**
 * Hard-threshold interaction on the opinion vector. Decides the outcome
 * from |gap| against the variant's thresholds, updates x[v] in place and
 * returns the outcome. Rewire-dynamics events only evaluate |gap| > gamma
 * and never move opinions.
 */
Outcome step_update(std::span<double> x, std::span<const int> participants, Dynamics d,
                    const LatentParams& latents, const ModelConfig& config);

using EventObserver = std::function<void(std::size_t event_index, std::span<const double> x)>;

/// Forward simulation. Deterministic in (config, latents). The observer,
/// if set, sees the opinion vector after every event.
Trajectory simulate(const ModelConfig& config, const LatentParams& latents,
                    const EventObserver& observer = {});

/// Candidate draws per rewiring event before it is recorded as skipped.
inline constexpr int kRewireRetries = 100;

} // namespace opvi

#endif // OPVI_ABM_SIM_HPP
