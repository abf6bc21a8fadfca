#include "opvi/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "opvi/csv.hpp"
#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

namespace opvi {

namespace {

// Energy errors beyond this count as divergent trajectories.
constexpr double kMaxEnergyError = 1000.0;

bool all_finite(std::span<const double> v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double kinetic(std::span<const double> p)
{
    double k = 0.0;
    for (const double x : p)
        k += x * x;
    return 0.5 * k;
}

// Step-size adaptation of Hoffman and Gelman with their default constants.
class DualAveraging {
public:
    explicit DualAveraging(double step, double target) : mu_(std::log(10.0 * step)), target_(target) {}

    double update(double accept_stat)
    {
        ++m_;
        const double w = 1.0 / (static_cast<double>(m_) + kT0);
        h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept_stat);
        const double log_step = mu_ - std::sqrt(static_cast<double>(m_)) / kGamma * h_bar_;
        const double eta = std::pow(static_cast<double>(m_), -kKappa);
        log_step_bar_ = eta * log_step + (1.0 - eta) * log_step_bar_;
        return std::exp(log_step);
    }
    double final_step() const { return std::exp(log_step_bar_); }

private:
    static constexpr double kGamma = 0.05;
    static constexpr double kT0 = 10.0;
    static constexpr double kKappa = 0.75;
    double mu_;
    double target_;
    double h_bar_ = 0.0;
    double log_step_bar_ = 0.0;
    std::size_t m_ = 0;
};

} // namespace

void HmcHyperparams::validate() const
{
    if (!(step_size > 0.0) || !std::isfinite(step_size))
        throw ConfigError("step_size must be positive");
    if (n_leapfrog == 0 || n_samples == 0)
        throw ConfigError("n_leapfrog and n_samples must be positive");
    if (!(target_accept > 0.0 && target_accept < 1.0))
        throw ConfigError("target_accept must lie in (0,1)");
}

LeapfrogResult leapfrog(std::span<const double> theta, std::span<const double> momentum, double step_size,
                        std::size_t n_steps, const GradientFn& grad_fn)
{
    if (theta.size() != momentum.size())
        throw DimensionError("leapfrog: position and momentum sizes differ");
    LeapfrogResult r;
    r.theta.assign(theta.begin(), theta.end());
    r.momentum.assign(momentum.begin(), momentum.end());
    const std::size_t m = theta.size();

    auto evaluate = [&]() {
        try {
            r.log_density = grad_fn(r.theta, r.grad);
        } catch (const PoisonedValueError&) {
            r.divergent = true;
        } catch (const NonFiniteGradientError&) {
            r.divergent = true;
        }
        if (!r.divergent && (!std::isfinite(r.log_density) || r.grad.size() != m || !all_finite(r.grad)))
            r.divergent = true;
        return !r.divergent;
    };

    if (!evaluate())
        return r;
    for (std::size_t s = 0; s < n_steps; ++s) {
        for (std::size_t i = 0; i < m; ++i)
            r.momentum[i] += 0.5 * step_size * r.grad[i];
        for (std::size_t i = 0; i < m; ++i)
            r.theta[i] += step_size * r.momentum[i];
        if (!all_finite(r.theta) || !evaluate()) {
            r.divergent = true;
            return r;
        }
        for (std::size_t i = 0; i < m; ++i)
            r.momentum[i] += 0.5 * step_size * r.grad[i];
    }
    if (!all_finite(r.momentum))
        r.divergent = true;
    return r;
}

HmcChain run_hmc(const LogDensityModel& model, const HmcHyperparams& hyper, const Deadline& deadline)
{
    hyper.validate();
    deadline.check("hmc");
    const std::size_t m = model.dim();
    Rng rng(hyper.seed);
    // The density is deterministic for HMC targets; this stream only feeds
    // models that ask for auxiliary randomness.
    Rng aux = Rng::stream(hyper.seed, 1);
    ad::Tape tape;
    const GradientFn grad_fn = [&](std::span<const double> th, std::vector<double>& g) {
        return value_and_gradient(model, th, aux, tape, g);
    };

    std::vector<double> theta = model.initial_theta();
    if (theta.size() != m)
        throw DimensionError("model initial_theta has the wrong dimension");
    std::vector<double> grad;
    double log_density = grad_fn(theta, grad);
    if (!std::isfinite(log_density) || !all_finite(grad))
        throw DivergenceError(0, "hmc: log density is not finite at the initial point");

    double step = hyper.step_size;
    DualAveraging adapt(step, hyper.target_accept);
    std::vector<double> p(m);

    HmcChain chain;
    chain.draws.reserve(hyper.n_samples);
    chain.log_density.reserve(hyper.n_samples);
    chain.accepted.reserve(hyper.n_samples);
    std::size_t n_accepted = 0;

    const std::size_t total = hyper.n_burnin + hyper.n_samples;
    for (std::size_t it = 0; it < total; ++it) {
        deadline.check("hmc");
        const bool burning = it < hyper.n_burnin;
        for (double& pi : p)
            pi = rng.normal();
        const double h0 = -log_density + kinetic(p);
        const LeapfrogResult prop = leapfrog(theta, p, step, hyper.n_leapfrog, grad_fn);

        double accept_stat = 0.0;
        if (!prop.divergent) {
            const double dh = (-prop.log_density + kinetic(prop.momentum)) - h0;
            if (std::isfinite(dh) && dh < kMaxEnergyError)
                accept_stat = dh <= 0.0 ? 1.0 : std::exp(-dh);
        }
        const bool accept = accept_stat > 0.0 && rng.uniform() < accept_stat;
        if (accept) {
            theta = prop.theta;
            grad = prop.grad;
            log_density = prop.log_density;
        }

        if (burning) {
            if (hyper.adapt_step_size) {
                step = adapt.update(accept_stat);
                if (it + 1 == hyper.n_burnin)
                    step = adapt.final_step();
            }
            continue;
        }
        chain.draws.push_back(theta);
        chain.log_density.push_back(log_density);
        chain.accepted.push_back(accept);
        n_accepted += accept ? 1 : 0;
    }
    chain.step_size = step;
    chain.acceptance_rate = static_cast<double>(n_accepted) / static_cast<double>(hyper.n_samples);
    if (chain.acceptance_rate < 0.01)
        throw TuningError("hmc acceptance rate " + csv::number(chain.acceptance_rate) +
                          " is below 1% after burn-in (step size " + csv::number(step) + ")");
    return chain;
}

HmcFit fit_hmc(const LikelihoodData& data, const HmcHyperparams& hyper, const Deadline& deadline)
{
    const PgabmModel model(data, PgabmModelOptions{.role_noise = false, .minibatch = 0});
    HmcFit fit;
    fit.chain = run_hmc(model, hyper, deadline);
    fit.posterior.source = PosteriorSource::mcmc;
    fit.posterior.samples.reserve(fit.chain.draws.size());
    for (const auto& th : fit.chain.draws)
        fit.posterior.samples.push_back(transform(th, data.variant(), data.config()));
    return fit;
}

void write_chain(const std::filesystem::path& path, const HmcChain& chain)
{
    std::ofstream out = csv::open_for_write(path);
    const std::size_t m = chain.draws.empty() ? 0 : chain.draws.front().size();
    out << "draw";
    for (std::size_t i = 0; i < m; ++i)
        out << ",theta_" << i;
    out << ",log_joint,accepted\n";
    for (std::size_t d = 0; d < chain.draws.size(); ++d) {
        out << d;
        for (const double v : chain.draws[d])
            out << ',' << csv::number(v);
        out << ',' << csv::number(chain.log_density[d]) << ',' << (chain.accepted[d] ? 1 : 0) << '\n';
    }
    if (!out)
        throw Error("write failed for '" + path.string() + "'");
}

} // namespace opvi
