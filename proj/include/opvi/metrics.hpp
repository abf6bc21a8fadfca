#ifndef OPVI_METRICS_HPP
#define OPVI_METRICS_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opvi/abm_sim.hpp"
#include "opvi/pgabm.hpp"
#include "opvi/svi.hpp"

namespace opvi {

/// sqrt(mean((a - b)^2)). Throws ConfigError on empty input and
/// DimensionError on a length mismatch.
double rmse(std::span<const double> estimates, std::span<const double> truths);

/// Fraction of agents whose thresholded phi (> 0.5 means leader) differs
/// from the true role. Empty input scores 0.
double role_error_rate(std::span<const double> phi, const std::vector<bool>& roles);

/// |k_hat - k_true| / F, both in 1..F.
double relative_k_error(int k_hat, int k_true, int feed_len);

/// |phi - 1[beta_true]|.
double beta_error(double phi_beta, bool beta_true);

enum class RunStatus { ok, timeout, failed };
std::string_view to_string(RunStatus s) noexcept;
RunStatus parse_status(std::string_view s);
PosteriorSource parse_method(std::string_view s);

/// One scored quantity of one run.
struct ParamScore {
    std::string name;
    double truth = 0.0;
    double estimate = 0.0;
    double error = 0.0;
};

/**
 * Per-parameter scores of a point estimate. Thresholds score |estimate -
 * truth| (eps_plus, eps_minus; BCMS adds the _L leader pair), roles score
 * the error rate with truth/estimate as leader fractions, K the relative
 * error, beta the probability-scale error, gamma the absolute error.
 */
std::vector<ParamScore> score(const LatentParams& truth, const ConstrainedParams& estimate,
                              const ModelConfig& config);

/// Parameter names score() emits for a variant, in order.
std::vector<std::string> scored_names(Variant variant);

struct ExperimentResult {
    Variant variant = Variant::BCMb;
    PosteriorSource method = PosteriorSource::svi;
    std::uint64_t seed = 0;
    int n_steps = 0;
    int n_agents = 0;
    int feed_len = 0;
    double xi = 0.0;
    double leader_frac = 0.0;
    std::vector<ParamScore> scores; ///< estimate and error are NaN unless ok
    double wall_time_s = 0.0;
    RunStatus status = RunStatus::ok;
    std::string message;            ///< failure reason; not written to the CSV
};

/// Flat row of the results CSV.
struct ResultRow {
    Variant variant = Variant::BCMb;
    PosteriorSource method = PosteriorSource::svi;
    std::uint64_t seed = 0;
    int n_steps = 0;
    int n_agents = 0;
    int feed_len = 0;
    double xi = 0.0;
    double leader_frac = 0.0;
    std::string param_name;
    double truth = 0.0;
    double estimate = 0.0;
    double error = 0.0;
    double wall_time_s = 0.0;
    RunStatus status = RunStatus::ok;
};

inline constexpr std::string_view kResultsHeader =
    "variant,method,seed,T,N,F,xi,leader_frac,param_name,truth,estimate,error,wall_time_s,status";

std::vector<ResultRow> rows(const ExperimentResult& result);
std::string format_row(const ResultRow& row);

/// Parses and checks the whole file against the schema: exact header, 14
/// columns, known enums, numeric fields, non-negative finite errors on ok
/// rows. Throws Error naming the line on the first violation.
std::vector<ResultRow> read_results(std::istream& in);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

} // namespace opvi

#endif // OPVI_METRICS_HPP
