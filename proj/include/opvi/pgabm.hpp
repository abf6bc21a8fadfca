#ifndef OPVI_PGABM_HPP
#define OPVI_PGABM_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "opvi/abm_sim.hpp"
#include "opvi/autodiff.hpp"

namespace opvi {

class Rng;

/// Relaxation constants: sigmoid steepness and Gumbel-Softmax temperature.
struct PgabmConfig {
    double rho = 32.0;
    double tau = 0.1;
    void validate() const;
};

/// Dimension of the unconstrained vector theta for a variant:
/// 2 (BCMb), N+4 (BCMS), 2+F (BCMI), 3 (BCMU, BCMG).
std::size_t theta_dim(Variant variant, const ModelConfig& config);

/**
 * Parameters in constrained space. Discrete latents are replaced by
 * probabilities in `phi`:
 *  - BCMS: phi[u] = P(agent u is a leader)
 *  - BCMI: phi[j] = unnormalized weight of K = j+1 (normalized inside the
 *          likelihood; argmax gives K-hat)
 *  - BCMU: phi[0] = P(beta = 1)
 * For BCMS, eps_plus/eps_minus are the follower thresholds.
 */
struct ConstrainedParams {
    Variant variant = Variant::BCMb;
    double eps_plus = 0.25;
    double eps_minus = 0.75;
    double eps_plus_L = 0.25;
    double eps_minus_L = 0.75;
    std::vector<double> phi;
    double gamma = 0.5;
};

/// Componentwise sigmoid map: eps+ = s(t)/2, eps- = s(t)/2 + 1/2, and
/// s(t) for every probability-valued coordinate. Throws DimensionError.
ConstrainedParams transform(std::span<const double> theta, Variant variant, const ModelConfig& config);
/// Analytic inverse of transform() on the open constrained boxes.
std::vector<double> inverse_transform(const ConstrainedParams& params, const ModelConfig& config);

/// sum_i log |d constrained_i / d theta_i|. Threshold coordinates (the
/// first 2, or 4 for BCMS) carry the extra factor 1/2.
double log_jacobian(std::span<const double> theta, Variant variant);
ad::Var log_jacobian(ad::Var theta, Variant variant);

/// Tape-side constrained parameters; fields unused by a variant stay empty.
struct ConstrainedVars {
    ad::Var eps_plus;
    ad::Var eps_minus;
    ad::Var eps_plus_L;
    ad::Var eps_minus_L;
    ad::Var log_phi;        ///< BCMS: log P(leader), length N
    ad::Var log_phi_compl;  ///< BCMS: log P(follower), length N
    ad::Var phi;            ///< BCMI: raw weights (length F); BCMU: P(beta=1)
    ad::Var gamma;
};

ConstrainedVars transform(ad::Var theta, Variant variant, const ModelConfig& config);
/// Places plain constrained parameters on a tape as constants (phi floored
/// at 1e-12 before taking logs).
ConstrainedVars constant_params(ad::Tape& tape, const ConstrainedParams& params);

struct Kappa {
    double p_plus = 0.0;
    double p_minus = 0.0;
    double p_rewire = 0.0;
};

/**
 * Relaxed outcome probabilities of one event at opinion state x:
 * p+ = s(rho (eps+ - |gap|)), p- = s(-rho (eps- - |gap|)); BCM-G adds
 * p_r = s(-rho (gamma - |gap|)) with update/rewire masking by d.
 * BCMS uses the phi-weighted thresholds of v; BCMI reports the normalized
 * phi-mixture of the per-K probabilities; BCMU is beta-independent given x.
 */
Kappa kappa(std::span<const double> x, const InteractionEvent& event, const ConstrainedParams& params,
            const ModelConfig& config, const PgabmConfig& pg);

/// Gumbel-Softmax sample softmax((log p_k + g_k) / tau). Probabilities
/// below 1e-12 are floored (a warning is logged once per process).
std::vector<double> gumbel_softmax(std::span<const double> probs, double tau, std::span<const double> noise);

/// Gumbel noise for the BCMS role relaxation: two draws per agent.
struct RoleNoise {
    std::vector<double> leader;
    std::vector<double> follower;

    static RoleNoise draw(std::size_t n_agents, Rng& rng);
};

/**
 * Deterministic replay of opinions from x0 using the observed outcomes and
 * a hypothesis for the latent payload that shapes the path (BCMS roles for
 * rates, BCMI attention depth, BCMU beta). The observer sees x after each
 * event. Returns the signed gap seen by the updated agent at every event.
 */
std::vector<double> replay_opinions(const Trajectory& traj, const VariantPayload& hypothesis,
                                    const EventObserver& observer = {});

/**
 * theta-independent per-event data for the log-likelihood. Rows are
 * update-dynamics events (s+/s- terms) and rewire-dynamics events (s_r
 * terms). Each family stores coef/offset pairs so the logit of the observed
 * outcome is coef * threshold + offset[path]; BCMI keeps one offset vector
 * per attention depth, BCMU one per beta.
 */
class LikelihoodData {
public:
    LikelihoodData(const Trajectory& traj, const PgabmConfig& pg);

    Variant variant() const noexcept { return variant_; }
    const ModelConfig& config() const noexcept { return traj_->config; }
    const PgabmConfig& pgabm() const noexcept { return pg_; }
    std::size_t n_events() const noexcept { return n_events_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    /// BCMS with leader rates differing from follower rates: opinions
    /// depend on roles and are replayed on the tape.
    bool role_dependent_path() const noexcept { return role_dependent_path_; }

    /// Restriction to the given event indices (sorted, unique). The
    /// likelihood of the subset is scaled by n_events / subset size.
    LikelihoodData subset(std::span<const std::uint32_t> events) const;

    struct Block {
        std::vector<std::uint32_t> event;   ///< source event index
        std::vector<std::uint32_t> target;  ///< updated agent
        std::vector<double> sign_plus;      ///< +1 if s+ observed, else -1
        std::vector<double> sign_minus;     ///< +1 if s- (or s_r) observed
        std::vector<double> coef_plus;      ///< rho * sign_plus
        std::vector<double> coef_minus;     ///< -rho * sign_minus
        std::vector<std::vector<double>> offset_plus;   ///< per path
        std::vector<std::vector<double>> offset_minus;  ///< per path
        std::size_t size() const noexcept { return event.size(); }
    };

    const Block& update_block() const noexcept { return update_; }
    const Block& rewire_block() const noexcept { return rewire_; }
    const Trajectory& trajectory() const noexcept { return *traj_; }
    double scale() const noexcept { return scale_; }

private:
    LikelihoodData() = default;
    void fill_offsets(Block& block, std::size_t path, std::span<const double> gaps, bool rewire_rows);

    const Trajectory* traj_ = nullptr;
    PgabmConfig pg_;
    Variant variant_ = Variant::BCMb;
    std::size_t n_events_ = 0;
    std::size_t n_paths_ = 1;
    bool role_dependent_path_ = false;
    double scale_ = 1.0;
    std::vector<std::uint32_t> subset_events_; ///< empty = full trajectory
    Block update_;
    Block rewire_;
};

/**
 * Sum over events of the Bernoulli log-probabilities of the observed
 * outcomes. BCMS roles use the Gumbel-Softmax relaxation with `noise`, or
 * the expectation r = phi when noise is absent. Throws PoisonedValueError
 * naming the first event whose term is not finite.
 */
ad::Var log_likelihood(const LikelihoodData& data, const ConstrainedVars& params,
                       const RoleNoise* noise = nullptr);

/// log p(y, theta) = log_likelihood(transform(theta)) + log_jacobian(theta).
ad::Var log_joint(const LikelihoodData& data, ad::Var theta, const RoleNoise* noise = nullptr);

/// Plain-double evaluation of log_joint.
double log_joint(const LikelihoodData& data, std::span<const double> theta, const RoleNoise* noise = nullptr);
double log_likelihood(const LikelihoodData& data, const ConstrainedParams& params,
                      const RoleNoise* noise = nullptr);

} // namespace opvi

#endif // OPVI_PGABM_HPP
