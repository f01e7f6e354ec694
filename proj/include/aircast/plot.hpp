#pragma once

#include "aircast/evaluation.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace aircast {

inline constexpr std::array<std::string_view, 5> kMetricNames = {"R", "RMSE", "rRMSE", "MRE", "MAE"};

struct PlotStyle {
    int width = 720;
    int height = 420;
    int margin = 48;
    int max_lead_hour = 72;
};

/// pollutant,lead_hour,value for hours 1..max_lead_hour; value is empty where unscored.
std::string metric_curve_csv(const MetricsReport& report, std::string_view metric, const PlotStyle& style = {});
/// Line chart with one polyline per pollutant, rendered from the CSV text alone.
std::string render_svg(const std::string& csv, std::string_view metric, const PlotStyle& style = {});

/// Writes <metric>.csv and <metric>.svg for every metric; returns the written paths.
std::vector<std::filesystem::path> emit_plot_data(const MetricsReport& report, const std::filesystem::path& dir,
                                                  const PlotStyle& style = {});

} // namespace aircast
