#include "opvi/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "opvi/csv.hpp"
#include "opvi/errors.hpp"

namespace opvi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_double(const std::string& s, const char* what)
{
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(std::string("bad ") + what + " '" + s + "'");
    return v;
}

template <class Int>
Int parse_int(const std::string& s, const char* what)
{
    Int v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error(std::string("bad ") + what + " '" + s + "'");
    return v;
}

} // namespace

double rmse(std::span<const double> estimates, std::span<const double> truths)
{
    if (estimates.size() != truths.size())
        throw DimensionError("rmse: " + std::to_string(estimates.size()) + " estimates for " +
                             std::to_string(truths.size()) + " truths");
    if (estimates.empty())
        throw ConfigError("rmse of an empty vector");
    double ss = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double d = estimates[i] - truths[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(estimates.size()));
}

double role_error_rate(std::span<const double> phi, const std::vector<bool>& roles)
{
    if (phi.size() != roles.size())
        throw DimensionError("role_error_rate: phi and roles differ in length");
    if (phi.empty())
        return 0.0;
    std::size_t wrong = 0;
    for (std::size_t u = 0; u < phi.size(); ++u)
        wrong += (phi[u] > 0.5) != roles[u] ? 1 : 0;
    return static_cast<double>(wrong) / static_cast<double>(phi.size());
}

double relative_k_error(int k_hat, int k_true, int feed_len)
{
    if (feed_len < 1 || k_hat < 1 || k_hat > feed_len || k_true < 1 || k_true > feed_len)
        throw ConfigError("relative_k_error needs 1 <= k <= F");
    return std::abs(k_hat - k_true) / static_cast<double>(feed_len);
}

double beta_error(double phi_beta, bool beta_true)
{
    if (!(phi_beta >= 0.0 && phi_beta <= 1.0))
        throw ConfigError("beta probability must lie in [0,1]");
    return std::abs(phi_beta - (beta_true ? 1.0 : 0.0));
}

std::string_view to_string(RunStatus s) noexcept
{
    switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::timeout: return "timeout";
    case RunStatus::failed: return "failed";
    }
    return "?";
}

RunStatus parse_status(std::string_view s)
{
    if (s == "ok")
        return RunStatus::ok;
    if (s == "timeout")
        return RunStatus::timeout;
    if (s == "failed")
        return RunStatus::failed;
    throw ConfigError("unknown status '" + std::string(s) + "'");
}

PosteriorSource parse_method(std::string_view s)
{
    if (s == "svi")
        return PosteriorSource::svi;
    if (s == "hmc" || s == "mcmc")
        return PosteriorSource::mcmc;
    if (s == "abc")
        return PosteriorSource::abc;
    throw ConfigError("unknown method '" + std::string(s) + "' (expected svi, hmc or abc)");
}

std::vector<std::string> scored_names(Variant variant)
{
    switch (variant) {
    case Variant::BCMS: return {"eps_plus", "eps_plus_L", "eps_minus", "eps_minus_L", "roles"};
    case Variant::BCMI: return {"eps_plus", "eps_minus", "K"};
    case Variant::BCMU: return {"eps_plus", "eps_minus", "beta"};
    case Variant::BCMG: return {"eps_plus", "eps_minus", "gamma"};
    default: return {"eps_plus", "eps_minus"};
    }
}

std::vector<ParamScore> score(const LatentParams& truth, const ConstrainedParams& est, const ModelConfig& config)
{
    if (est.variant != config.variant)
        throw ConfigError("estimate and configuration disagree on the variant");
    auto absolute = [](std::string name, double t, double e) {
        return ParamScore{std::move(name), t, e, std::abs(e - t)};
    };
    std::vector<ParamScore> out;
    out.push_back(absolute("eps_plus", truth.eps_plus, est.eps_plus));
    if (config.variant == Variant::BCMS) {
        const RolePayload& r = truth.roles();
        out.push_back(absolute("eps_plus_L", r.eps_plus_L, est.eps_plus_L));
        out.push_back(absolute("eps_minus", truth.eps_minus, est.eps_minus));
        out.push_back(absolute("eps_minus_L", r.eps_minus_L, est.eps_minus_L));
        double true_frac = 0.0, est_frac = 0.0;
        for (std::size_t u = 0; u < r.leader.size(); ++u) {
            true_frac += r.leader[u] ? 1.0 : 0.0;
            est_frac += est.phi.at(u) > 0.5 ? 1.0 : 0.0;
        }
        const double n = r.leader.empty() ? 1.0 : static_cast<double>(r.leader.size());
        out.push_back({"roles", true_frac / n, est_frac / n, role_error_rate(est.phi, r.leader)});
        return out;
    }
    out.push_back(absolute("eps_minus", truth.eps_minus, est.eps_minus));
    switch (config.variant) {
    case Variant::BCMI: {
        const int k = truth.attention().k_attend;
        const int k_hat = estimate_k(est.phi);
        out.push_back({"K", static_cast<double>(k), static_cast<double>(k_hat),
                       relative_k_error(k_hat, k, config.feed_len)});
        break;
    }
    case Variant::BCMU: {
        const bool beta = truth.backfire().beta;
        const double phi = estimate_beta_probability(est.phi);
        out.push_back({"beta", beta ? 1.0 : 0.0, phi, beta_error(phi, beta)});
        break;
    }
    case Variant::BCMG: out.push_back(absolute("gamma", truth.rewiring().gamma, est.gamma)); break;
    default: break;
    }
    return out;
}

std::vector<ResultRow> rows(const ExperimentResult& r)
{
    std::vector<ResultRow> out;
    out.reserve(r.scores.size());
    for (const ParamScore& s : r.scores) {
        ResultRow row;
        row.variant = r.variant;
        row.method = r.method;
        row.seed = r.seed;
        row.n_steps = r.n_steps;
        row.n_agents = r.n_agents;
        row.feed_len = r.feed_len;
        row.xi = r.xi;
        row.leader_frac = r.leader_frac;
        row.param_name = s.name;
        row.truth = s.truth;
        row.estimate = r.status == RunStatus::ok ? s.estimate : kNaN;
        row.error = r.status == RunStatus::ok ? s.error : kNaN;
        row.wall_time_s = r.wall_time_s;
        row.status = r.status;
        out.push_back(std::move(row));
    }
    return out;
}

std::string format_row(const ResultRow& r)
{
    return csv::row({std::string(to_string(r.variant)), std::string(to_string(r.method)), std::to_string(r.seed),
                     std::to_string(r.n_steps), std::to_string(r.n_agents), std::to_string(r.feed_len),
                     csv::number(r.xi), csv::number(r.leader_frac), csv::field(r.param_name), csv::number(r.truth),
                     csv::number(r.estimate), csv::number(r.error), csv::number(r.wall_time_s),
                     std::string(to_string(r.status))});
}

std::vector<ResultRow> read_results(std::istream& in)
{
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line) || line != kResultsHeader)
        throw Error("results line 1: header must be '" + std::string(kResultsHeader) + "'");
    std::vector<ResultRow> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        try {
            const auto f = csv::split(line);
            if (f.size() != 14)
                throw Error("expected 14 columns, found " + std::to_string(f.size()));
            ResultRow r;
            r.variant = parse_variant(f[0]);
            r.method = parse_method(f[1]);
            r.seed = parse_int<std::uint64_t>(f[2], "seed");
            r.n_steps = parse_int<int>(f[3], "T");
            r.n_agents = parse_int<int>(f[4], "N");
            r.feed_len = parse_int<int>(f[5], "F");
            r.xi = parse_double(f[6], "xi");
            r.leader_frac = parse_double(f[7], "leader_frac");
            r.param_name = f[8];
            if (r.param_name.empty())
                throw Error("empty param_name");
            r.truth = parse_double(f[9], "truth");
            r.estimate = parse_double(f[10], "estimate");
            r.error = parse_double(f[11], "error");
            r.wall_time_s = parse_double(f[12], "wall_time_s");
            r.status = parse_status(f[13]);
            if (r.status == RunStatus::ok && !(std::isfinite(r.error) && r.error >= 0.0))
                throw Error("ok row needs a finite non-negative error");
            if (!(r.wall_time_s >= 0.0))
                throw Error("negative wall time");
            out.push_back(std::move(r));
        } catch (const Error& e) {
            throw Error("results line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ResultRow> read_results(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path.string() + "'");
    try {
        return read_results(in);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

} // namespace opvi
