#ifndef OPVI_TRAJECTORY_IO_HPP
#define OPVI_TRAJECTORY_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "opvi/abm_sim.hpp"

namespace opvi {

/**
 * Line-delimited JSON trajectory files.
 *
 * Line 1 (header):
 *   {"format":"opvi-trajectory","version":1,"config":{...},"x0":[...],
 *    "edges":[[a,b],...], "latents":{...}}          // edges, latents optional
 * Lines 2..: one event each
 *   {"step":t,"participants":[...],"d":0|1,"s_plus":b,"s_minus":b,"s_rewire":b}
 *
 * Doubles are written in shortest round-trip form, so read(write(t)) == t
 * bit for bit.
 */
void write_trajectory(std::ostream& out, const Trajectory& traj,
                      const std::optional<LatentParams>& truth = std::nullopt);
void write_trajectory(const std::filesystem::path& path, const Trajectory& traj,
                      const std::optional<LatentParams>& truth = std::nullopt);

struct TrajectoryFile {
    Trajectory trajectory;
    std::optional<LatentParams> truth;
};

/// Throws Error with the line number on malformed input.
TrajectoryFile read_trajectory(std::istream& in);
TrajectoryFile read_trajectory(const std::filesystem::path& path);

} // namespace opvi

#endif // OPVI_TRAJECTORY_IO_HPP
