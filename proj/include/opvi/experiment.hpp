#ifndef OPVI_EXPERIMENT_HPP
#define OPVI_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opvi/abc.hpp"
#include "opvi/mcmc.hpp"
#include "opvi/metrics.hpp"
#include "opvi/svi.hpp"

namespace opvi {

/// A list of values, or "sample": draw per cell from the default support.
struct ValueAxis {
    bool sample = false;
    std::vector<double> values;

    std::size_t size() const noexcept { return sample ? 1 : values.size(); }
};

/**
 * A grid experiment, read from a JSON file:
 *
 *   {
 *     "spec_version": 1,
 *     "variant": "BCMb",
 *     "axes": {"T": [512, 2048], "N": [100], "eps_plus": "sample", ...},
 *     "methods": ["svi", "abc"],
 *     "replicates": 1,
 *     "master_seed": 7,
 *     "time_limit_seconds": 10800,
 *     "output_dir": "results",
 *     "svi": {"learning_rate": 0.01, "n_epochs": 20000, "minibatch_events": 0},
 *     "hmc": {"n_burnin": 5000, "n_samples": 5000, "n_leapfrog": 10, "step_size": 0.05},
 *     "abc": {"n_sims": 10000},
 *     "posterior_draws": 200,
 *     "record_wall_time": false
 *   }
 *
 * Axes: T, N, F, xi, leader_frac, mu (numbers) and eps_plus, eps_minus,
 * eps_plus_L, eps_minus_L, K, beta, gamma (numbers or "sample"). Missing
 * axes take a single default value. Sampled thresholds come from
 * {0.05, ..., 0.45} and {0.55, ..., 0.95}, gamma from {0.1, ..., 0.9}, K
 * from 1..F and beta from a fair coin.
 */
struct ExperimentSpec {
    int spec_version = 1;
    Variant variant = Variant::BCMb;
    std::vector<int> n_steps{128};
    std::vector<int> n_agents{100};
    std::vector<int> feed_len{10};
    std::vector<double> xi{0.5};
    std::vector<double> leader_frac{0.2};
    std::vector<double> mu{0.02};
    ValueAxis eps_plus{true, {}};
    ValueAxis eps_minus{true, {}};
    ValueAxis eps_plus_L{true, {}};
    ValueAxis eps_minus_L{true, {}};
    ValueAxis k_attend{true, {}};
    ValueAxis beta{true, {}};
    ValueAxis gamma{true, {}};
    int interactions_per_step = 10;
    double graph_density = 0.1;
    std::vector<PosteriorSource> methods{PosteriorSource::svi};
    int replicates = 1;
    std::uint64_t master_seed = 0;
    double time_limit_seconds = 10800.0;
    std::filesystem::path output_dir = "results";
    SviHyperparams svi;
    HmcHyperparams hmc;
    std::size_t abc_sims = 10000;
    std::size_t posterior_draws = 200;
    /// Off by default so that reruns produce byte-identical results; the
    /// measured times then go to timings.csv only.
    bool record_wall_time = false;

    void validate() const;
};

/// Throws ConfigError naming the offending key.
ExperimentSpec parse_spec(std::string_view json_text);
ExperimentSpec load_spec(const std::filesystem::path& path);

/// One point of the grid with its replicate index and derived seed.
struct GridCell {
    Variant variant = Variant::BCMb;
    int n_steps = 0;
    int n_agents = 0;
    int feed_len = 0;
    double xi = 0.5;
    double leader_frac = 0.2;
    double mu = 0.02;
    std::optional<double> eps_plus, eps_minus, eps_plus_L, eps_minus_L, gamma;
    std::optional<int> k_attend;
    std::optional<bool> beta;
    int replicate = 0;
    std::uint64_t seed = 0;
};

/**
 * Cartesian product of the axes times replicates, in row-major order
 * (T slowest, then N, F, xi, leader_frac, mu, the parameter axes, and the
 * replicate fastest). Cell seed = hash_seed(master_seed, i_T, i_N, i_F,
 * i_xi, i_leader, i_mu, i_eps_plus, i_eps_minus, i_eps_plus_L,
 * i_eps_minus_L, i_K, i_beta, i_gamma, replicate).
 */
std::vector<GridCell> expand(const ExperimentSpec& spec);

/// Simulation configuration and ground truth of a cell (sampled axes are
/// drawn from a stream of the cell seed).
ModelConfig cell_config(const ExperimentSpec& spec, const GridCell& cell);
LatentParams cell_truth(const ExperimentSpec& spec, const GridCell& cell);

/// Mean of up to n draws taken at evenly spaced positions.
ConstrainedParams summarize_posterior(const PosteriorSamples& posterior, std::size_t n);

/// Simulates the cell and fits one method under the time limit. Timeouts
/// and method errors are recorded in the status, never thrown.
ExperimentResult run_method(const ExperimentSpec& spec, const GridCell& cell, const Trajectory& observed,
                            PosteriorSource method);

/// Every method of the spec on one cell.
std::vector<ExperimentResult> run_single(const ExperimentSpec& spec, const GridCell& cell);

struct GridOptions {
    std::size_t parallelism = 1;
    std::function<void(const ExperimentResult&)> on_result;
};

struct GridSummary {
    std::size_t jobs = 0;
    std::size_t skipped = 0;  ///< resumed from existing ok rows
    std::size_t ok = 0;
    std::size_t timeout = 0;
    std::size_t failed = 0;
    std::filesystem::path results;
};

/**
 * Runs every (cell, method) job and writes into spec.output_dir:
 * results.csv (canonical job order), timings.csv, plot_*.csv and plot_*.svg.
 * Jobs whose rows in an existing results.csv are all ok are not rerun.
 * Throws Error naming the path when the directory is not writable.
 */
GridSummary run_grid(const ExperimentSpec& spec, const GridOptions& options = {});

} // namespace opvi

#endif // OPVI_EXPERIMENT_HPP
