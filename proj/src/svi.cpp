#include "opvi/svi.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "opvi/csv.hpp"
#include "opvi/errors.hpp"
#include "opvi/rng.hpp"

namespace opvi {

namespace {

std::string describe(std::span<const double> theta)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < theta.size(); ++i)
        out << (i ? ", " : "") << csv::number(theta[i]);
    out << ']';
    return out.str();
}

void check_lambda(const VariationalParams& lambda, const LogDensityModel& model)
{
    if (lambda.mean.size() != model.dim() || lambda.log_scale.size() != model.dim())
        throw DimensionError("variational parameters have dimension " + std::to_string(lambda.mean.size()) +
                             ", model needs " + std::to_string(model.dim()));
}

} // namespace

// ------------------------------------------------------------------ family

std::vector<double> VariationalParams::reparameterize(std::span<const double> z) const
{
    if (z.size() != dim())
        throw DimensionError("noise dimension does not match the variational family");
    std::vector<double> theta(dim());
    for (std::size_t i = 0; i < dim(); ++i)
        theta[i] = mean[i] + std::exp(log_scale[i]) * z[i];
    return theta;
}

double VariationalParams::entropy() const
{
    const double per_dim = 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
    double h = per_dim * static_cast<double>(dim());
    for (const double s : log_scale)
        h += s;
    return h;
}

double VariationalParams::log_density(std::span<const double> theta) const
{
    if (theta.size() != dim())
        throw DimensionError("theta dimension does not match the variational family");
    double lp = -0.5 * std::log(2.0 * std::numbers::pi) * static_cast<double>(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
        const double z = (theta[i] - mean[i]) * std::exp(-log_scale[i]);
        lp -= 0.5 * z * z + log_scale[i];
    }
    return lp;
}

void SviHyperparams::validate() const
{
    if (!(learning_rate > 0.0))
        throw ConfigError("learning_rate must be positive");
    if (n_epochs == 0 || elbo_samples == 0)
        throw ConfigError("n_epochs and elbo_samples must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0))
        throw ConfigError("Adam betas must lie in (0,1)");
    if (!(adam_eps > 0.0))
        throw ConfigError("adam_eps must be positive");
}

// ------------------------------------------------------------------ Adam

void adam_step(std::span<double> params, std::span<const double> grad, AdamState& state, const SviHyperparams& hyper)
{
    if (params.size() != grad.size())
        throw DimensionError("adam_step: parameter and gradient sizes differ");
    for (const double g : grad)
        if (!std::isfinite(g))
            throw DivergenceError(state.t, "adam_step: non-finite gradient at step " + std::to_string(state.t));
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    ++state.t;
    const double b1 = hyper.adam_beta1, b2 = hyper.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.adam_eps);
    }
}

// ------------------------------------------------------------------ ELBO

ElboGradient elbo_gradient(const VariationalParams& lambda, const LogDensityModel& model, std::size_t n_samples,
                           Rng& rng, ad::Tape& tape)
{
    check_lambda(lambda, model);
    if (n_samples == 0)
        throw ConfigError("elbo needs at least one sample");
    const std::size_t m = lambda.dim();
    tape.clear();
    const ad::Var mean = tape.input(lambda.mean);
    const ad::Var log_scale = tape.input(lambda.log_scale);
    const ad::Var scale = ad::exp(log_scale);

    std::vector<double> z(m);
    ad::Var total;
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (double& zi : z)
            zi = rng.normal();
        const ad::Var theta = mean + scale * tape.constant(z);
        const ad::Var lj = model.log_density(theta, rng);
        if (!std::isfinite(lj.scalar())) {
            const auto t = theta.value();
            throw NonFiniteSampleError(std::vector<double>(t.begin(), t.end()),
                                       "non-finite log density at theta = " + describe(t));
        }
        total = s == 0 ? lj : total + lj;
    }
    const double entropy_const = 0.5 * (1.0 + std::log(2.0 * std::numbers::pi)) * static_cast<double>(m);
    const ad::Var elbo = total * (1.0 / static_cast<double>(n_samples)) + ad::sum(log_scale) + entropy_const;
    tape.backward(elbo);

    ElboGradient out;
    out.elbo = elbo.scalar();
    const auto gm = tape.grad(mean);
    const auto gs = tape.grad(log_scale);
    out.d_mean.assign(gm.begin(), gm.end());
    out.d_log_scale.assign(gs.begin(), gs.end());
    return out;
}

double elbo_estimate(const VariationalParams& lambda, const LogDensityModel& model, std::size_t n_samples, Rng& rng)
{
    check_lambda(lambda, model);
    if (n_samples == 0)
        throw ConfigError("elbo needs at least one sample");
    ad::Tape tape;
    std::vector<double> z(lambda.dim());
    double total = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (double& zi : z)
            zi = rng.normal();
        const std::vector<double> theta = lambda.reparameterize(z);
        tape.clear();
        const double lj = model.log_density(tape.constant(theta), rng).scalar();
        if (!std::isfinite(lj))
            throw NonFiniteSampleError(theta, "non-finite log density at theta = " + describe(theta));
        total += lj;
    }
    return total / static_cast<double>(n_samples) + lambda.entropy();
}

// ------------------------------------------------------------------ fit

SviResult fit_svi(const LogDensityModel& model, const SviHyperparams& hyper, const Deadline& deadline)
{
    hyper.validate();
    deadline.check("svi");
    const std::size_t m = model.dim();
    Rng rng(hyper.seed);

    SviResult result;
    result.lambda.mean = model.initial_theta();
    result.lambda.log_scale.assign(m, hyper.init_log_scale);
    if (result.lambda.mean.size() != m)
        throw DimensionError("model initial_theta has the wrong dimension");
    result.elbo_trace.reserve(hyper.n_epochs);

    std::vector<double> params(2 * m);
    std::vector<double> descent(2 * m);
    AdamState state;
    ad::Tape tape;
    for (std::size_t epoch = 0; epoch < hyper.n_epochs; ++epoch) {
        deadline.check("svi");
        ElboGradient eg;
        try {
            eg = elbo_gradient(result.lambda, model, hyper.elbo_samples, rng, tape);
        } catch (const NonFiniteSampleError& e) {
            throw DivergenceError(epoch, "svi diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        } catch (const PoisonedValueError& e) {
            throw DivergenceError(epoch, "svi diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        } catch (const NonFiniteGradientError& e) {
            throw DivergenceError(epoch, "svi diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(eg.elbo))
            throw DivergenceError(epoch, "svi diverged at epoch " + std::to_string(epoch) + ": non-finite ELBO");
        result.elbo_trace.push_back(eg.elbo);

        std::copy(result.lambda.mean.begin(), result.lambda.mean.end(), params.begin());
        std::copy(result.lambda.log_scale.begin(), result.lambda.log_scale.end(), params.begin() + static_cast<long>(m));
        for (std::size_t i = 0; i < m; ++i) {
            descent[i] = -eg.d_mean[i];
            descent[m + i] = -eg.d_log_scale[i];
        }
        try {
            adam_step(params, descent, state, hyper);
        } catch (const DivergenceError&) {
            throw DivergenceError(epoch, "svi diverged at epoch " + std::to_string(epoch) + ": non-finite gradient");
        }
        std::copy(params.begin(), params.begin() + static_cast<long>(m), result.lambda.mean.begin());
        std::copy(params.begin() + static_cast<long>(m), params.end(), result.lambda.log_scale.begin());
    }
    return result;
}

SviResult fit_svi(const LikelihoodData& data, const SviHyperparams& hyper, const Deadline& deadline)
{
    const PgabmModel model(data, PgabmModelOptions{.role_noise = true, .minibatch = hyper.minibatch_events});
    return fit_svi(model, hyper, deadline);
}

// ------------------------------------------------------------------ posterior

std::string_view to_string(PosteriorSource s) noexcept
{
    switch (s) {
    case PosteriorSource::svi: return "svi";
    case PosteriorSource::mcmc: return "hmc";
    case PosteriorSource::abc: return "abc";
    }
    return "?";
}

PosteriorSamples sample_posterior(const VariationalParams& lambda, Variant variant, const ModelConfig& config,
                                  std::size_t n, std::uint64_t seed)
{
    if (lambda.dim() != theta_dim(variant, config))
        throw DimensionError("variational parameters do not match the variant");
    Rng rng(seed);
    PosteriorSamples out;
    out.source = PosteriorSource::svi;
    out.samples.reserve(n);
    std::vector<double> z(lambda.dim());
    for (std::size_t s = 0; s < n; ++s) {
        for (double& zi : z)
            zi = rng.normal();
        out.samples.push_back(transform(lambda.reparameterize(z), variant, config));
    }
    return out;
}

ConstrainedParams posterior_mean(const PosteriorSamples& posterior)
{
    if (posterior.samples.empty())
        throw ConfigError("posterior_mean of an empty sample set");
    ConstrainedParams mean = posterior.samples.front();
    const double n = static_cast<double>(posterior.samples.size());
    mean.eps_plus = mean.eps_minus = mean.eps_plus_L = mean.eps_minus_L = mean.gamma = 0.0;
    std::fill(mean.phi.begin(), mean.phi.end(), 0.0);
    for (const ConstrainedParams& s : posterior.samples) {
        if (s.phi.size() != mean.phi.size())
            throw DimensionError("posterior samples disagree in phi length");
        mean.eps_plus += s.eps_plus / n;
        mean.eps_minus += s.eps_minus / n;
        mean.eps_plus_L += s.eps_plus_L / n;
        mean.eps_minus_L += s.eps_minus_L / n;
        mean.gamma += s.gamma / n;
        for (std::size_t i = 0; i < s.phi.size(); ++i)
            mean.phi[i] += s.phi[i] / n;
    }
    return mean;
}

std::vector<bool> estimate_roles(std::span<const double> phi)
{
    std::vector<bool> roles(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i)
        roles[i] = phi[i] > 0.5;
    return roles;
}

int estimate_k(std::span<const double> phi)
{
    if (phi.empty())
        throw ConfigError("estimate_k needs at least one weight");
    std::size_t best = 0;
    for (std::size_t i = 1; i < phi.size(); ++i)
        if (phi[i] > phi[best])
            best = i;
    return static_cast<int>(best) + 1;
}

double estimate_beta_probability(std::span<const double> phi)
{
    if (phi.size() != 1)
        throw DimensionError("beta probability needs exactly one weight");
    return phi[0];
}

std::vector<std::pair<std::string, double>> named_values(const ConstrainedParams& params)
{
    std::vector<std::pair<std::string, double>> out{{"eps_plus", params.eps_plus}, {"eps_minus", params.eps_minus}};
    if (params.variant == Variant::BCMS) {
        out.emplace_back("eps_plus_L", params.eps_plus_L);
        out.emplace_back("eps_minus_L", params.eps_minus_L);
    }
    if (params.variant == Variant::BCMG)
        out.emplace_back("gamma", params.gamma);
    for (std::size_t i = 0; i < params.phi.size(); ++i)
        out.emplace_back("phi_" + std::to_string(i), params.phi[i]);
    return out;
}

void write_posterior(const std::filesystem::path& path, const PosteriorSamples& posterior)
{
    std::ofstream out = csv::open_for_write(path);
    out << "sample";
    if (!posterior.samples.empty())
        for (const auto& [name, value] : named_values(posterior.samples.front()))
            out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < posterior.samples.size(); ++i) {
        out << i;
        for (const auto& [name, value] : named_values(posterior.samples[i]))
            out << ',' << csv::number(value);
        out << '\n';
    }
    if (!out)
        throw Error("write failed for '" + path.string() + "'");
}

void write_elbo_trace(const std::filesystem::path& path, std::span<const double> trace)
{
    std::ofstream out = csv::open_for_write(path);
    out << "epoch,elbo\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        out << i << ',' << csv::number(trace[i]) << '\n';
    if (!out)
        throw Error("write failed for '" + path.string() + "'");
}

} // namespace opvi
