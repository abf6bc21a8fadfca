#include "opvi/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "opvi/csv.hpp"
#include "opvi/errors.hpp"

namespace opvi {

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 180, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string escape(const std::string& s)
{
    std::string out;
    for (const char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame fit_frame(const std::vector<Series>& series, bool square)
{
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const Series& s : series) {
        for (const double x : s.x)
            if (std::isfinite(x)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
        for (const double y : s.y)
            if (std::isfinite(y)) {
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    }
    if (!std::isfinite(x0)) {
        x0 = y0 = 0.0;
        x1 = y1 = 1.0;
    }
    if (square) {
        x0 = y0 = std::min(x0, y0);
        x1 = y1 = std::max(x1, y1);
    } else {
        y0 = std::min(y0, 0.0);
    }
    if (x1 <= x0)
        x1 = x0 + 1.0;
    if (y1 <= y0)
        y1 = y0 + 1.0;
    return {x0, x1, y0, y1};
}

void axes(std::ostringstream& out, const Frame& f, const std::string& title, const std::string& xl,
          const std::string& yl)
{
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
        << "</text>\n";
    const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left << "\" height=\"" << bottom - top
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        out << "<text x=\"" << f.px(xv) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">"
            << csv::number(std::round(xv * 1e4) / 1e4) << "</text>\n";
        out << "<text x=\"" << left - 6 << "\" y=\"" << f.py(yv) + 4 << "\" text-anchor=\"end\">"
            << csv::number(std::round(yv * 1e4) / 1e4) << "</text>\n";
    }
    out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
        << escape(xl) << "</text>\n";
    out << "<text transform=\"translate(16," << (top + bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(yl) << "</text>\n";
}

void legend(std::ostringstream& out, const std::vector<Series>& series)
{
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double y = kTop + 14 + 18.0 * static_cast<double>(i);
        const char* color = kPalette[i % std::size(kPalette)];
        out << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
            << color << "\"/>\n";
        out << "<text x=\"" << kWidth - kRight + 28 << "\" y=\"" << y << "\">" << escape(series[i].label)
            << "</text>\n";
    }
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out = csv::open_for_write(path);
    out << text;
    if (!out)
        throw Error("write failed for '" + path.string() + "'");
}

double axis_value(const ResultRow& r, const std::string& axis)
{
    if (axis == "T")
        return r.n_steps;
    if (axis == "N")
        return r.n_agents;
    if (axis == "F")
        return r.feed_len;
    if (axis == "xi")
        return r.xi;
    return r.leader_frac;
}

} // namespace

std::string render_line_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series)
{
    const Frame f = fit_frame(series, false);
    std::ostringstream out;
    axes(out, f, title, x_label, y_label);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        std::vector<std::pair<double, double>> pts;
        for (std::size_t k = 0; k < series[i].x.size(); ++k)
            if (std::isfinite(series[i].x[k]) && std::isfinite(series[i].y[k]))
                pts.emplace_back(series[i].x[k], series[i].y[k]);
        std::sort(pts.begin(), pts.end());
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : pts)
            out << f.px(x) << ',' << f.py(y) << ' ';
        out << "\"/>\n";
        for (const auto& [x, y] : pts)
            out << "<circle cx=\"" << f.px(x) << "\" cy=\"" << f.py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    legend(out, series);
    out << "</svg>\n";
    return out.str();
}

std::string render_scatter_svg(const std::string& title, const std::vector<Series>& series)
{
    const Frame f = fit_frame(series, true);
    std::ostringstream out;
    axes(out, f, title, "truth", "estimate");
    out << "<line x1=\"" << f.px(f.x0) << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.px(f.x1) << "\" y2=\""
        << f.py(f.y1) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kPalette[i % std::size(kPalette)];
        for (std::size_t k = 0; k < series[i].x.size(); ++k)
            if (std::isfinite(series[i].x[k]) && std::isfinite(series[i].y[k]))
                out << "<circle cx=\"" << f.px(series[i].x[k]) << "\" cy=\"" << f.py(series[i].y[k])
                    << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.7\"/>\n";
    }
    legend(out, series);
    out << "</svg>\n";
    return out.str();
}

void write_plots(const std::filesystem::path& dir, const std::vector<ResultRow>& rows)
{
    // Fold each run into per-metric errors.
    struct Run {
        const ResultRow* first = nullptr;
        double eps_ss = 0.0;
        int eps_n = 0;
        std::map<std::string, double> other;
    };
    std::map<std::pair<std::string, std::uint64_t>, Run> runs;
    for (const ResultRow& r : rows) {
        if (r.status != RunStatus::ok)
            continue;
        Run& run = runs[{std::string(to_string(r.method)), r.seed}];
        if (!run.first)
            run.first = &r;
        if (r.param_name.rfind("eps_", 0) == 0) {
            run.eps_ss += r.error * r.error;
            ++run.eps_n;
        } else {
            run.other[r.param_name] = r.error;
        }
    }

    for (const std::string axis : {"T", "N", "F", "xi", "leader_frac"}) {
        std::set<double> distinct;
        for (const auto& [key, run] : runs)
            distinct.insert(axis_value(*run.first, axis));
        if (axis != "T" && distinct.size() < 2)
            continue;
        // (axis value, method, metric) -> (sum, count)
        std::map<std::tuple<double, std::string, std::string>, std::pair<double, int>> agg;
        for (const auto& [key, run] : runs) {
            const double v = axis_value(*run.first, axis);
            if (run.eps_n > 0) {
                auto& a = agg[{v, key.first, "eps_rmse"}];
                a.first += std::sqrt(run.eps_ss / run.eps_n);
                ++a.second;
            }
            for (const auto& [name, err] : run.other) {
                auto& a = agg[{v, key.first, name}];
                a.first += err;
                ++a.second;
            }
        }
        std::ostringstream csv_out;
        csv_out << axis << ",method,metric,mean_error,n_runs\n";
        std::map<std::string, Series> lines;
        for (const auto& [k, a] : agg) {
            const auto& [v, method, metric] = k;
            const double mean = a.first / a.second;
            csv_out << csv::number(v) << ',' << method << ',' << metric << ',' << csv::number(mean) << ','
                    << a.second << '\n';
            Series& s = lines[method + " " + metric];
            s.label = method + " " + metric;
            s.x.push_back(v);
            s.y.push_back(mean);
        }
        std::vector<Series> series;
        for (auto& [label, s] : lines)
            series.push_back(std::move(s));
        write_text(dir / ("plot_error_vs_" + axis + ".csv"), csv_out.str());
        write_text(dir / ("plot_error_vs_" + axis + ".svg"),
                   render_line_svg("error vs " + axis, axis, "mean error", series));
    }

    std::ostringstream scatter;
    scatter << "method,param_name,truth,estimate\n";
    std::map<std::string, Series> points;
    for (const ResultRow& r : rows) {
        if (r.status != RunStatus::ok)
            continue;
        scatter << to_string(r.method) << ',' << csv::field(r.param_name) << ',' << csv::number(r.truth) << ','
                << csv::number(r.estimate) << '\n';
        if (r.param_name.rfind("eps_", 0) == 0 || r.param_name == "gamma" || r.param_name == "beta") {
            const std::string label = std::string(to_string(r.method)) + " " + r.param_name;
            Series& s = points[label];
            s.label = label;
            s.x.push_back(r.truth);
            s.y.push_back(r.estimate);
        }
    }
    std::vector<Series> series;
    for (auto& [label, s] : points)
        series.push_back(std::move(s));
    write_text(dir / "plot_scatter.csv", scatter.str());
    write_text(dir / "plot_scatter.svg", render_scatter_svg("estimate vs truth", series));
}

} // namespace opvi
