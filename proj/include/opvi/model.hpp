#ifndef OPVI_MODEL_HPP
#define OPVI_MODEL_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "opvi/autodiff.hpp"
#include "opvi/pgabm.hpp"

namespace opvi {

class Rng;

/// Unnormalized log-density over R^M, recorded on a tape so that both SVI
/// and HMC can differentiate it. `rng` feeds any auxiliary randomness the
/// model uses (relaxation noise, minibatch selection).
class LogDensityModel {
public:
    virtual ~LogDensityModel() = default;
    virtual std::size_t dim() const = 0;
    virtual ad::Var log_density(ad::Var theta, Rng& rng) const = 0;
    /// Starting point for optimizers and chains.
    virtual std::vector<double> initial_theta() const { return std::vector<double>(dim(), 0.0); }
};

/// Value and gradient of model.log_density at theta, using `tape` as
/// scratch (it is cleared first).
double value_and_gradient(const LogDensityModel& model, std::span<const double> theta, Rng& rng, ad::Tape& tape,
                          std::vector<double>& grad);

struct PgabmModelOptions {
    /// Draw fresh Gumbel noise for BCMS roles on every evaluation. When
    /// false the expectation r = phi is used (deterministic density).
    bool role_noise = true;
    /// Events per evaluation; 0 uses every event.
    std::size_t minibatch = 0;
};

/// log_joint of a trajectory under the relaxed model.
class PgabmModel final : public LogDensityModel {
public:
    PgabmModel(const LikelihoodData& data, PgabmModelOptions options = {});

    std::size_t dim() const override { return dim_; }
    ad::Var log_density(ad::Var theta, Rng& rng) const override;
    /// BCMS starts from thresholds that respect the leader/follower ordering.
    std::vector<double> initial_theta() const override;

    const LikelihoodData& data() const noexcept { return *data_; }
    Variant variant() const noexcept { return data_->variant(); }

private:
    const LikelihoodData* data_;
    PgabmModelOptions options_;
    std::size_t dim_;
};

/// `count` distinct indices from [0, n), sorted ascending.
std::vector<std::uint32_t> sample_indices(std::size_t n, std::size_t count, Rng& rng);

} // namespace opvi

#endif // OPVI_MODEL_HPP
