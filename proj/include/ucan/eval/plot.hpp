#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ucan/eval/report.hpp"

namespace ucan::eval {

/// Grouped bar chart of ROI bias (percent): one group per ROI, one bar per
/// translation task, whiskers at ±1 std. Plain SVG, byte-stable for a given report.
inline std::string roi_bias_svg(const MetricReport& r, const std::string& method = kModelMethod) {
    static constexpr std::array<const char*, 6> colours{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    const auto rois = r.rois();
    const auto tasks = task_columns();
    const double bar_w = 10, group_gap = 20, left = 70, top = 40, plot_h = 300;
    const double group_w = bar_w * static_cast<double>(tasks.size()) + group_gap;
    const double width = left + group_w * static_cast<double>(std::max<std::size_t>(rois.size(), 1)) + 150;
    const double height = top + plot_h + 90;

    double extent = 5.0;  // percent
    for (const auto& roi : rois)
        for (const auto& t : tasks)
            if (auto s = r.bias(method, t, roi)) extent = std::max(extent, 100.0 * (std::abs(s->mean) + s->std));
    extent = std::ceil(extent / 5.0) * 5.0;
    const double zero_y = top + plot_h / 2;
    auto y_of = [&](double pct) { return zero_y - pct / extent * (plot_h / 2); };
    auto f = [](double v) { return detail::fixed(v, 2); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f(width) << "\" height=\"" << f(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<text x=\"" << f(left) << "\" y=\"20\" font-size=\"14\">ROI bias (%), mean and std, method " << method << "</text>\n";
    for (int k = -2; k <= 2; ++k) {
        const double pct = extent * k / 2.0;
        s << "<line x1=\"" << f(left) << "\" x2=\"" << f(width - 150) << "\" y1=\"" << f(y_of(pct)) << "\" y2=\""
          << f(y_of(pct)) << "\" stroke=\"" << (k == 0 ? "black" : "#dddddd") << "\"/>\n";
        s << "<text x=\"" << f(left - 8) << "\" y=\"" << f(y_of(pct) + 4) << "\" text-anchor=\"end\">" << f(pct) << "</text>\n";
    }
    for (std::size_t g = 0; g < rois.size(); ++g) {
        const double gx = left + group_gap / 2 + group_w * static_cast<double>(g);
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            auto sm = r.bias(method, tasks[t], rois[g]);
            if (!sm) continue;
            const double x = gx + bar_w * static_cast<double>(t);
            const double m = 100.0 * sm->mean, sd = 100.0 * sm->std;
            const double y0 = std::min(y_of(m), zero_y), h = std::abs(y_of(m) - zero_y);
            s << "<rect x=\"" << f(x) << "\" y=\"" << f(y0) << "\" width=\"" << f(bar_w - 1) << "\" height=\"" << f(h)
              << "\" fill=\"" << colours[t % colours.size()] << "\"/>\n";
            const double cx = x + (bar_w - 1) / 2;
            s << "<line x1=\"" << f(cx) << "\" x2=\"" << f(cx) << "\" y1=\"" << f(y_of(m - sd)) << "\" y2=\""
              << f(y_of(m + sd)) << "\" stroke=\"black\"/>\n";
        }
        s << "<text x=\"" << f(gx + bar_w * 3) << "\" y=\"" << f(top + plot_h + 20) << "\" text-anchor=\"middle\">"
          << rois[g] << "</text>\n";
    }
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const double y = top + 15 * static_cast<double>(t);
        s << "<rect x=\"" << f(width - 130) << "\" y=\"" << f(y) << "\" width=\"10\" height=\"10\" fill=\""
          << colours[t % colours.size()] << "\"/>\n";
        std::string label = tasks[t];
        label.replace(label.find("->"), 2, "&#8594;");
        s << "<text x=\"" << f(width - 115) << "\" y=\"" << f(y + 9) << "\">" << label << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

inline void emit_plots(const MetricReport& r, const std::filesystem::path& dir, const std::string& method = kModelMethod) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream out(dir / "roi_bias.svg");
    if (!out) throw IoError("cannot write " + (dir / "roi_bias.svg").string());
    out << roi_bias_svg(r, method);
    if (!out) throw IoError("failed writing roi_bias.svg");
}

}  // namespace ucan::eval
