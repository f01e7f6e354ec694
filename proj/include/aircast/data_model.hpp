#pragma once

#include "aircast/tensor.hpp"
#include "aircast/timeutil.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aircast {

inline constexpr std::size_t kPollutants = 6;

/// Fixed pollutant axis order.
enum class Pollutant : std::size_t { SO2 = 0, NO2, CO, O3, PM25, PM10 };

inline constexpr std::array<std::string_view, kPollutants> kPollutantNames = {"SO2", "NO2", "CO", "O3", "PM2.5", "PM10"};
/// Column keys used by the station CSV.
inline constexpr std::array<std::string_view, kPollutants> kPollutantKeys = {"so2", "no2", "co", "o3", "pm25", "pm10"};

std::size_t pollutant_index(std::string_view name_or_key);

struct Station {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
};

void validate_station(const Station& s);

/// Hourly concentrations of one station. Row t holds the six pollutants
/// at `start + t` hours.
struct StationSeries {
    Station station;
    Hour start{};
    std::vector<double> values;
    std::vector<std::uint8_t> valid;

    StationSeries() = default;
    StationSeries(Station s, Hour start_time, std::size_t hours);

    std::size_t hours() const noexcept { return values.size() / kPollutants; }
    double value(std::size_t t, std::size_t p) const { return values[t * kPollutants + p]; }
    bool is_valid(std::size_t t, std::size_t p) const { return valid[t * kPollutants + p] != 0; }
    void set(std::size_t t, std::size_t p, double v, bool ok = true);
    void set_missing(std::size_t t, std::size_t p);
    std::size_t valid_count() const;
};

void validate_series(const StationSeries& s);

/// Per-pollutant mean and population standard deviation.
struct NormStats {
    std::array<double, kPollutants> mean{};
    std::array<double, kPollutants> std{};
};

double normalize(double x, const NormStats& stats, std::size_t pollutant);
double denormalize(double z, const NormStats& stats, std::size_t pollutant);

/// Pooled statistics over the valid entries of every series of one city.
NormStats compute_norm_stats(const std::vector<StationSeries>& series);

/// Linear fill of interior gaps of at most `max_gap` hours, per pollutant.
StationSeries fill_gaps(const StationSeries& series, std::size_t max_gap);

/// Regular lat/lon raster. `origin_*` is the centre of cell (0, 0); row i
/// lies at origin_lat + i * resolution, column j at origin_lon + j * resolution.
struct GridGeometry {
    double origin_lat = 0.0;
    double origin_lon = 0.0;
    double resolution = 0.1;
    std::size_t n_lat = 0;
    std::size_t n_lon = 0;

    double lat_of(std::size_t row) const { return origin_lat + static_cast<double>(row) * resolution; }
    double lon_of(std::size_t col) const { return origin_lon + static_cast<double>(col) * resolution; }
    std::size_t cells() const { return n_lat * n_lon; }
    /// Nearest cell (row, col) to a location, clamped to the grid.
    std::pair<std::size_t, std::size_t> nearest_cell(double lat, double lon) const;

    friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

struct GriddedField {
    GridGeometry geometry;
    std::vector<std::string> channels;
    Hour time{};
    Tensor data; ///< [C x n_lat x n_lon]

    GriddedField() = default;
    GriddedField(GridGeometry g, std::vector<std::string> channel_names, Hour t);

    std::size_t channel_index(std::string_view name) const;
    double at(std::size_t c, std::size_t row, std::size_t col) const { return data.at(c, row, col); }
    double& at(std::size_t c, std::size_t row, std::size_t col) { return data.at(c, row, col); }
};

void validate_field(const GriddedField& f);

/// Bilinear sample of one channel at a location inside the cell-centre hull.
double sample_bilinear(const GriddedField& field, std::size_t channel, double lat, double lon);
/// Resamples onto `target`; every target centre must lie inside the source hull.
GriddedField bilinear_regrid(const GriddedField& field, const GridGeometry& target);
/// Resamples onto the grid at `target_resolution` anchored at the source
/// origin and covering as much of the source hull as fits.
GriddedField bilinear_regrid(const GriddedField& field, double target_resolution);

/// [sin(dlat)/lat_range, cos(dlat)/lat_range, sin(dlon)/lon_range, cos(dlon)/lon_range],
/// with the degree differences converted to radians.
std::array<double, 4> relative_pe(double lat, double lon, double ref_lat, double ref_lon, double lat_range,
                                  double lon_range);

/// Per-channel standardisation of gridded inputs.
struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std;
};

/// One city's raw inputs: station series plus hourly meteorology and
/// monthly emission grids on a shared geometry.
struct CityDataset {
    std::string city;
    Hour start{};
    std::size_t hours = 0;
    std::vector<StationSeries> series;
    std::vector<std::shared_ptr<const GriddedField>> met; ///< one per hour from `start`
    std::map<YearMonth, std::shared_ptr<const GriddedField>> ems;
    std::string embedded_config; ///< JSON text of the generating config, if any

    const GridGeometry& geometry() const;
    std::vector<Station> stations() const;
    std::size_t met_channels() const;
    std::size_t ems_channels() const;
    const GriddedField& met_at(Hour t) const;
    std::shared_ptr<const GriddedField> met_ptr(Hour t) const;
    std::shared_ptr<const GriddedField> ems_for(Hour t) const;
    bool has_met(Hour t) const;
};

void validate_dataset(const CityDataset& d);

/// Drops a modality at the model boundary by zeroing its (normalised) channels.
struct InputMask {
    bool met = true;
    bool ems = true;
};

/// A dataset after gap filling and normalisation, plus everything the model
/// needs to turn raw fields into input tensors.
struct PreparedCity {
    std::shared_ptr<const CityDataset> data;
    NormStats norm;
    ChannelStats met_stats;
    ChannelStats ems_stats;
    std::size_t max_gap = 3;
    std::vector<StationSeries> filled;
    Tensor site_pe;  ///< [N_s x 4], each component standardised across stations
    Tensor grid_pe;  ///< [2 x n_lat x n_lon]
    double ref_lat = 0.0;
    double ref_lon = 0.0;

    std::size_t stations() const { return filled.size(); }
    std::vector<std::string> station_ids() const;
    /// Normalised [N_s x 6] frame at `start + index`; nullopt if any entry is invalid.
    std::optional<Tensor> frame(std::int64_t index) const;
    /// Normalised model grid input [C_met + C_ems + 2 x n_lat x n_lon].
    Tensor grid_input(const GriddedField& met, const GriddedField& ems, InputMask mask = {}) const;
    std::size_t grid_channels() const;
};

PreparedCity prepare_city(std::shared_ptr<const CityDataset> data, std::size_t max_gap = 3);

enum class WindowKind { SixHour, Interpolation };

/// One training/inference instance. For SixHour windows x_prev/x_curr are
/// X_{t-6}, X_t and the target is X_{t+6}; for Interpolation windows they are
/// X_t, X_{t+6} and the target holds the five hours in between.
struct SampleWindow {
    WindowKind kind = WindowKind::SixHour;
    Hour anchor{};
    Tensor x_prev;  ///< [N_s x 6], normalised
    Tensor x_curr;  ///< [N_s x 6], normalised
    std::shared_ptr<const GriddedField> met;
    std::shared_ptr<const GriddedField> ems;
    TimeCode timecode;
    Tensor target;  ///< [N_s x 6] or [5 x N_s x 6], normalised
};

struct WindowSet {
    std::vector<SampleWindow> windows;
    std::size_t candidates = 0;
    std::size_t dropped = 0;
};

/// Hour (relative to the anchor) whose meteorology conditions the window.
int met_offset(WindowKind kind);

WindowSet build_windows(const PreparedCity& city, std::size_t stride, WindowKind kind);

} // namespace aircast
