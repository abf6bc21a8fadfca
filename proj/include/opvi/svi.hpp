#ifndef OPVI_SVI_HPP
#define OPVI_SVI_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "opvi/deadline.hpp"
#include "opvi/model.hpp"
#include "opvi/pgabm.hpp"

namespace opvi {

class Rng;

/// Mean-field normal q(theta) = prod_i N(mean_i, exp(log_scale_i)^2).
struct VariationalParams {
    std::vector<double> mean;
    std::vector<double> log_scale;

    std::size_t dim() const noexcept { return mean.size(); }
    /// theta = mean + exp(log_scale) * z
    std::vector<double> reparameterize(std::span<const double> z) const;
    /// Closed-form entropy of q.
    double entropy() const;
    /// log q(theta).
    double log_density(std::span<const double> theta) const;
};

struct SviHyperparams {
    double learning_rate = 0.01;
    std::size_t n_epochs = 20000;
    std::size_t elbo_samples = 1;
    std::size_t minibatch_events = 0; ///< 0 = full batch
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double init_log_scale = -2.302585092994046; ///< log 0.1
    std::uint64_t seed = 0;

    void validate() const;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t t = 0;
};

/// One Adam step that descends along `grad` (pass the negated gradient to
/// ascend). Bias-corrected moments. Throws DivergenceError on a
/// non-finite gradient.
void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state,
               const SviHyperparams& hyper);

/// Monte Carlo ELBO: mean over n_samples of log p(y, theta_s) plus the
/// analytic entropy of q. Throws NonFiniteSampleError carrying the draw.
double elbo_estimate(const VariationalParams& lambda, const LogDensityModel& model, std::size_t n_samples, Rng& rng);

/// ELBO estimate and its gradient with respect to (mean, log_scale).
struct ElboGradient {
    double elbo = 0.0;
    std::vector<double> d_mean;
    std::vector<double> d_log_scale;
};
ElboGradient elbo_gradient(const VariationalParams& lambda, const LogDensityModel& model, std::size_t n_samples,
                           Rng& rng, ad::Tape& tape);

struct SviResult {
    VariationalParams lambda;
    std::vector<double> elbo_trace; ///< one entry per epoch
};

/// Gradient ascent on the ELBO for a fixed epoch budget. Deterministic in
/// hyper.seed. Throws DivergenceError with the epoch index when the ELBO
/// or its gradient stops being finite, TimeoutError past the deadline.
SviResult fit_svi(const LogDensityModel& model, const SviHyperparams& hyper, const Deadline& deadline = {});

/// fit_svi on the relaxed log joint of a trajectory: fresh Gumbel role
/// noise per evaluation, minibatches of hyper.minibatch_events events.
SviResult fit_svi(const LikelihoodData& data, const SviHyperparams& hyper, const Deadline& deadline = {});

enum class PosteriorSource { svi, mcmc, abc };
std::string_view to_string(PosteriorSource s) noexcept;

/**
 * Posterior draws in constrained space. Discrete latents are stored as
 * probabilities or indicators in `phi` (ABC draws are one-hot for BCMI
 * and 0/1 for BCMS roles and BCMU beta), so every source is summarized
 * the same way.
 */
struct PosteriorSamples {
    std::vector<ConstrainedParams> samples;
    PosteriorSource source = PosteriorSource::svi;
};

PosteriorSamples sample_posterior(const VariationalParams& lambda, Variant variant, const ModelConfig& config,
                                  std::size_t n, std::uint64_t seed);

/// Named coordinates of a constrained draw in a fixed per-variant order:
/// eps_plus, eps_minus, then eps_plus_L, eps_minus_L (BCMS), phi_<i>
/// (BCMS, BCMI, BCMU) or gamma (BCMG).
std::vector<std::pair<std::string, double>> named_values(const ConstrainedParams& params);

/// One row per draw: sample, then the named_values columns.
void write_posterior(const std::filesystem::path& path, const PosteriorSamples& posterior);

/// Componentwise mean of the samples.
ConstrainedParams posterior_mean(const PosteriorSamples& posterior);

/// Point estimates for the discrete latents.
std::vector<bool> estimate_roles(std::span<const double> phi); ///< phi_u > 0.5
int estimate_k(std::span<const double> phi);                   ///< 1 + argmax
double estimate_beta_probability(std::span<const double> phi); ///< phi[0]

void write_elbo_trace(const std::filesystem::path& path, std::span<const double> trace);

} // namespace opvi

#endif // OPVI_SVI_HPP
