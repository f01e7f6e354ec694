#include "aircast/plot.hpp"

#include "aircast/error.hpp"
#include "aircast/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace aircast {

namespace {

std::optional<double> metric_value(const Metrics& m, std::string_view metric)
{
    if (metric == "R") {
        return m.r;
    }
    if (metric == "RMSE") {
        return m.rmse;
    }
    if (metric == "rRMSE") {
        return m.rrmse;
    }
    if (metric == "MRE") {
        return m.mre;
    }
    if (metric == "MAE") {
        return m.mae;
    }
    throw ValidationError("unknown metric '" + std::string(metric) + "'");
}

std::string fixed(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

constexpr std::array<const char*, kPollutants> kColours = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                                            "#d62728", "#9467bd", "#8c564b"};

} // namespace

std::string metric_curve_csv(const MetricsReport& report, std::string_view metric, const PlotStyle& style)
{
    std::ostringstream os;
    os << "pollutant,lead_hour,value\n";
    for (std::size_t p = 0; p < kPollutants; ++p) {
        for (int h = 1; h <= style.max_lead_hour; ++h) {
            os << kPollutantNames[p] << ',' << h << ',';
            auto it = std::find(report.lead_hours.begin(), report.lead_hours.end(), h);
            if (it != report.lead_hours.end()) {
                const auto& m = report.per_hour[p][static_cast<std::size_t>(it - report.lead_hours.begin())];
                if (m) {
                    if (auto v = metric_value(*m, metric)) {
                        os << format_double(*v);
                    }
                }
            }
            os << '\n';
        }
    }
    return os.str();
}

std::string render_svg(const std::string& csv, std::string_view metric, const PlotStyle& style)
{
    std::map<std::string, std::vector<std::pair<int, double>>> curves;
    std::vector<std::string> order;
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) {
            throw ValidationError("malformed plot CSV row '" + line + "'");
        }
        const std::string name = line.substr(0, c1);
        if (!curves.contains(name)) {
            order.push_back(name);
        }
        auto& curve = curves[name];
        const std::string value = line.substr(c2 + 1);
        if (!value.empty()) {
            curve.emplace_back(std::stoi(line.substr(c1 + 1, c2 - c1 - 1)), std::stod(value));
        }
    }
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& [_, pts] : curves) {
        for (const auto& [h, v] : pts) {
            lo = any ? std::min(lo, v) : v;
            hi = any ? std::max(hi, v) : v;
            any = true;
        }
    }
    if (!any || hi == lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double m = style.margin;
    const double plot_w = style.width - 2 * m, plot_h = style.height - 2 * m;
    auto x_of = [&](int h) { return m + plot_w * (h - 1) / std::max(1, style.max_lead_hour - 1); };
    auto y_of = [&](double v) { return m + plot_h * (hi - v) / (hi - lo); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\"" << style.height
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << m << "\" y=\"" << m / 2 << "\" font-size=\"14\">" << metric << " by lead hour</text>\n";
    os << "<line x1=\"" << fixed(m) << "\" y1=\"" << fixed(m + plot_h) << "\" x2=\"" << fixed(m + plot_w)
       << "\" y2=\"" << fixed(m + plot_h) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << fixed(m) << "\" y1=\"" << fixed(m) << "\" x2=\"" << fixed(m) << "\" y2=\""
       << fixed(m + plot_h) << "\" stroke=\"black\"/>\n";
    for (int h = 1; h <= style.max_lead_hour; ++h) {
        if (h == 1 || h % 12 == 0) {
            os << "<text x=\"" << fixed(x_of(h)) << "\" y=\"" << fixed(m + plot_h + 16)
               << "\" text-anchor=\"middle\">" << h << "</text>\n";
        }
    }
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        os << "<text x=\"" << fixed(m - 6) << "\" y=\"" << fixed(y_of(v) + 4) << "\" text-anchor=\"end\">"
           << fixed(v) << "</text>\n";
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& pts = curves[order[k]];
        const char* colour = kColours[k % kColours.size()];
        if (!pts.empty()) {
            os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < pts.size(); ++i) {
                os << (i ? " " : "") << fixed(x_of(pts[i].first)) << ',' << fixed(y_of(pts[i].second));
            }
            os << "\"/>\n";
        }
        const double ly = m + 14.0 * static_cast<double>(k);
        os << "<text x=\"" << fixed(m + plot_w - 60) << "\" y=\"" << fixed(ly) << "\" fill=\"" << colour << "\">"
           << order[k] << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<std::filesystem::path> emit_plot_data(const MetricsReport& report, const std::filesystem::path& dir,
                                                  const PlotStyle& style)
{
    if (report.lead_hours.empty()) {
        throw ValidationError("cannot plot an empty metrics report");
    }
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (auto metric : kMetricNames) {
        const std::string csv = metric_curve_csv(report, metric, style);
        const auto csv_path = dir / (std::string(metric) + ".csv");
        const auto svg_path = dir / (std::string(metric) + ".svg");
        write_text_file(csv_path, csv);
        write_text_file(svg_path, render_svg(csv, metric, style));
        written.push_back(csv_path);
        written.push_back(svg_path);
    }
    return written;
}

} // namespace aircast
