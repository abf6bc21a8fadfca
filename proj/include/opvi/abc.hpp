#ifndef OPVI_ABC_HPP
#define OPVI_ABC_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "opvi/abm_sim.hpp"
#include "opvi/deadline.hpp"
#include "opvi/svi.hpp"

namespace opvi {

class Rng;

/// Counts of positive and negative outcomes per time step.
struct SummaryStats {
    std::vector<int> pos_counts;
    std::vector<int> neg_counts;
    bool operator==(const SummaryStats&) const = default;
};

SummaryStats summarize(const Trajectory& traj);

/// Euclidean norm of the concatenated count differences. Throws
/// DimensionError when the lengths differ.
double distance(const SummaryStats& a, const SummaryStats& b);

struct AbcOptions {
    std::size_t n_sims = 10000;
    std::uint64_t seed = 0;
    /// Prior probability that an agent is a leader (BCMS only).
    double leader_fraction = 0.2;
    /// Worker threads for the forward simulations; 0 or 1 runs inline.
    std::size_t parallelism = 1;
};

/**
 * One prior draw: thresholds uniform on their boxes (BCMS thresholds sorted
 * so followers are the more permissive), roles Bernoulli(leader_fraction),
 * K uniform on 1..F, beta a fair coin, gamma uniform on (0,1).
 */
LatentParams sample_prior(Variant variant, const ModelConfig& config, double leader_fraction, Rng& rng);

/// Prior draw in the common posterior representation (indicators in phi).
ConstrainedParams to_constrained(const LatentParams& latents, const ModelConfig& config);

struct AbcDraw {
    std::size_t index = 0;
    ConstrainedParams params;
    double distance = 0.0;
};

struct AbcResult {
    PosteriorSamples posterior;
    std::vector<AbcDraw> accepted; ///< sorted by (distance, index)
};

/**
 * Rejection ABC: n_sims prior draws, each simulated from its own sub-seed
 * with the observed configuration; the ceil(n_sims/2) closest draws are
 * kept. Throws ConfigError when n_sims < 2, TimeoutError past the deadline.
 */
AbcResult fit_abc(const Trajectory& observed, const AbcOptions& options, const Deadline& deadline = {});

/// sim_index, parameter columns, distance
void write_accepted(const std::filesystem::path& path, const AbcResult& result);

} // namespace opvi

#endif // OPVI_ABC_HPP
