#include "opvi/model.hpp"

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_set>

#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

namespace opvi {

double value_and_gradient(const LogDensityModel& model, std::span<const double> theta, Rng& rng, ad::Tape& tape,
                          std::vector<double>& grad)
{
    if (theta.size() != model.dim())
        throw DimensionError("theta has dimension " + std::to_string(theta.size()) + ", model needs " +
                             std::to_string(model.dim()));
    tape.clear();
    const ad::Var in = tape.input(theta);
    const ad::Var out = model.log_density(in, rng);
    tape.backward(out);
    const auto g = tape.grad(in);
    grad.assign(g.begin(), g.end());
    return out.scalar();
}

PgabmModel::PgabmModel(const LikelihoodData& data, PgabmModelOptions options)
    : data_(&data), options_(options), dim_(theta_dim(data.variant(), data.config()))
{}

ad::Var PgabmModel::log_density(ad::Var theta, Rng& rng) const
{
    std::optional<RoleNoise> noise;
    if (options_.role_noise && data_->variant() == Variant::BCMS)
        noise = RoleNoise::draw(static_cast<std::size_t>(data_->config().n_agents), rng);
    const RoleNoise* np = noise ? &*noise : nullptr;

    if (options_.minibatch == 0 || options_.minibatch >= data_->n_events())
        return log_joint(*data_, theta, np);
    const auto events = sample_indices(data_->n_events(), options_.minibatch, rng);
    const LikelihoodData batch = data_->subset(events);
    return log_joint(batch, theta, np);
}

std::vector<double> PgabmModel::initial_theta() const
{
    std::vector<double> theta(dim_, 0.0);
    if (data_->variant() == Variant::BCMS) {
        theta[0] = 0.5;  // follower eps+ above leader eps+
        theta[1] = -0.5;
        theta[2] = -0.5; // follower eps- below leader eps-
        theta[3] = 0.5;
    }
    return theta;
}

std::vector<std::uint32_t> sample_indices(std::size_t n, std::size_t count, Rng& rng)
{
    if (count > n)
        throw ConfigError("cannot draw " + std::to_string(count) + " distinct indices from " + std::to_string(n));
    // Floyd's algorithm: exactly `count` draws, uniform over subsets.
    std::unordered_set<std::uint32_t> chosen;
    chosen.reserve(count * 2);
    std::vector<std::uint32_t> out;
    out.reserve(count);
    for (std::size_t j = n - count; j < n; ++j) {
        const auto t = static_cast<std::uint32_t>(rng.below(j + 1));
        const auto pick = chosen.insert(t).second ? t : static_cast<std::uint32_t>(j);
        if (pick != t)
            chosen.insert(pick);
        out.push_back(pick);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace opvi
