#ifndef OPVI_PLOT_HPP
#define OPVI_PLOT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "opvi/metrics.hpp"

namespace opvi {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal standalone SVG charts. Lines connect points in x order;
/// scatter adds the y = x diagonal.
std::string render_line_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series);
std::string render_scatter_svg(const std::string& title, const std::vector<Series>& series);

/**
 * Plot data from ok result rows. Per run (method, seed) the threshold
 * errors are folded into eps_rmse; roles, K, beta and gamma keep their own
 * error. Writes plot_error_vs_<axis>.csv/.svg (axis_value, method, metric,
 * mean_error, n_runs) for T and for every other axis with two or more
 * values, and plot_scatter.csv/.svg (method, param_name, truth, estimate).
 */
void write_plots(const std::filesystem::path& dir, const std::vector<ResultRow>& rows);

} // namespace opvi

#endif // OPVI_PLOT_HPP
