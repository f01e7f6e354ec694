#pragma once

#include "aircast/model.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace aircast {

/// Forecast frames in physical units for one initialisation.
struct ForecastBundle {
    Hour init_time{};
    std::vector<double> quantiles;
    std::vector<std::string> station_ids;
    std::vector<int> lead_hours;  ///< ascending
    std::vector<Tensor> frames;   ///< one [N_s x 6 x Q] per lead hour

    std::optional<std::size_t> index_of(int lead_hour) const;
};

/// Sorts the innermost (quantile) axis in place.
void sort_quantiles(Tensor& t);
/// The [.. x 6] slice of a [.. x 6 x Q] tensor at quantile index q.
Tensor quantile_slice(const Tensor& t, std::size_t q);
Tensor denormalize_frame(const Tensor& z, const NormStats& stats);

/// One 6-hour step: normalised [N_s x 6 x Q] at t+6 with sorted quantiles.
Tensor step_forecast(const ForecastModel& model, const ModelInputs& in);

struct RolloutInputs {
    Tensor x_prev;                 ///< normalised X_{t0-6}
    Tensor x_curr;                 ///< normalised X_{t0}
    Tensor site_pe;
    Hour t0{};
    std::vector<Tensor> step_grids; ///< grid input of step k (met valid at t0 + 6k)
};

/// Autoregressive rollout feeding back the median slice. Returns `steps`
/// normalised [N_s x 6 x Q] frames for t0+6 .. t0+6*steps.
std::vector<Tensor> rollout(const ForecastModel& model, const RolloutInputs& in, std::size_t steps);

/// Five normalised [5 x N_s x 6 x Q] frames strictly between x_k and x_k6.
Tensor interpolate_frames(const ForecastModel& interp, const Tensor& x_k, const Tensor& x_k6, const Tensor& site_pe,
                          const Tensor& grid, TimeCode tc);

/// Grid input with met valid at `met_time` and the emission month of `ems_time`.
Tensor city_grid(const PreparedCity& city, Hour met_time, Hour ems_time, InputMask mask = {});
/// Observed frames at t0-6 and t0 plus one grid per step.
RolloutInputs rollout_inputs(const PreparedCity& city, Hour t0, std::size_t steps, InputMask mask = {});

/// 6-hourly bundle with lead hours 6, 12, .., 6*steps.
ForecastBundle forecast_6h(const ForecastModel& model, const PreparedCity& city, Hour t0, std::size_t steps,
                           InputMask mask = {});
/// Hourly bundle with lead hours 1 .. 6*steps. Hours 6k come verbatim from the rollout.
ForecastBundle hourly_forecast(const ForecastModel& model, const ForecastModel& interp, const PreparedCity& city,
                               Hour t0, std::size_t steps, InputMask mask = {});

/// init_time,station_id,pollutant,lead_hour,quantile,value
void write_forecast_csv(const std::filesystem::path& path, const std::vector<ForecastBundle>& bundles);
std::vector<ForecastBundle> read_forecast_csv(const std::filesystem::path& path);

/// Site and cross-attention weights of one forward pass.
struct AttentionMaps {
    Tensor site;  ///< [N_s x N_s]
    Tensor cross; ///< [N_s x N_grids]
};

AttentionMaps attention_maps(const ForecastModel& model, const ModelInputs& in);
/// station_id,row,col,lat,lon,weight with one row per station and cell.
void write_cross_attention_csv(const std::filesystem::path& path, const AttentionMaps& maps,
                               const std::vector<std::string>& station_ids, const GridGeometry& geometry);

} // namespace aircast
