#ifndef OPVI_MCMC_HPP
#define OPVI_MCMC_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "opvi/deadline.hpp"
#include "opvi/model.hpp"
#include "opvi/svi.hpp"

namespace opvi {

struct HmcHyperparams {
    double step_size = 0.05;         ///< initial value; adapted during burn-in
    std::size_t n_leapfrog = 10;
    std::size_t n_burnin = 5000;
    std::size_t n_samples = 5000;
    double target_accept = 0.8;
    bool adapt_step_size = true;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Log density and its gradient at theta; returns the log density.
using GradientFn = std::function<double(std::span<const double> theta, std::vector<double>& grad)>;

struct LeapfrogResult {
    std::vector<double> theta;
    std::vector<double> momentum;
    double log_density = 0.0;
    std::vector<double> grad;   ///< gradient at the final position
    bool divergent = false;     ///< a non-finite value was met on the path
};

/// n_steps of the velocity-Verlet integrator for H = -log p(theta) + |p|^2/2.
/// Evaluation errors inside grad_fn and non-finite values mark the result
/// divergent instead of throwing.
LeapfrogResult leapfrog(std::span<const double> theta, std::span<const double> momentum, double step_size,
                        std::size_t n_steps, const GradientFn& grad_fn);

struct HmcChain {
    std::vector<std::vector<double>> draws; ///< unconstrained, post burn-in
    std::vector<double> log_density;
    std::vector<bool> accepted;
    double acceptance_rate = 0.0;           ///< over the kept draws
    double step_size = 0.0;                 ///< after adaptation
};

/// Metropolis-corrected HMC with identity mass matrix. Dual averaging tunes
/// the step size toward target_accept during burn-in; those draws are
/// discarded. Throws TuningError when fewer than 1% of kept proposals are
/// accepted, TimeoutError past the deadline.
HmcChain run_hmc(const LogDensityModel& model, const HmcHyperparams& hyper, const Deadline& deadline = {});

/// HMC on the relaxed log joint of a trajectory, with BCMS roles at their
/// expectation so the target is deterministic.
struct HmcFit {
    PosteriorSamples posterior;
    HmcChain chain;
};
HmcFit fit_hmc(const LikelihoodData& data, const HmcHyperparams& hyper, const Deadline& deadline = {});

/// draw, theta_0..theta_{M-1}, log_joint, accepted
void write_chain(const std::filesystem::path& path, const HmcChain& chain);

} // namespace opvi

#endif // OPVI_MCMC_HPP
