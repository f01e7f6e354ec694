#pragma once

#include "aircast/forecaster.hpp"
#include "aircast/training.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace aircast {

/// R, RMSE, rRMSE, MRE and MAE over one set of (prediction, observation) pairs.
/// NaN marks a missing entry; such pairs are dropped.
struct Metrics {
    std::optional<double> r;     ///< missing when either series is constant
    double rmse = 0.0;
    std::optional<double> rrmse; ///< missing when the observation mean is zero
    std::optional<double> mre;   ///< missing when every observation is zero
    double mae = 0.0;
    std::size_t n_pairs = 0;
    std::size_t mre_excluded = 0; ///< pairs left out of MRE because O = 0

    nlohmann::ordered_json to_json() const;
};

Metrics compute_metrics(std::span<const double> pred, std::span<const double> obs);

inline constexpr std::array<std::pair<int, int>, 3> kLeadWindows = {{{1, 24}, {25, 48}, {49, 72}}};

struct MetricsReport {
    std::string label;
    std::size_t bundles = 0;
    std::vector<int> lead_hours;
    /// per_hour[p][i] scores lead_hours[i]; missing when fewer than two pairs exist.
    std::array<std::vector<std::optional<Metrics>>, kPollutants> per_hour;
    std::array<std::array<std::optional<Metrics>, kLeadWindows.size()>, kPollutants> windows;

    nlohmann::ordered_json to_json() const;
    /// pollutant,lead_hour,metric,value,n_pairs with lead_hour "1-24" style for windows.
    std::string to_csv() const;
};

MetricsReport metrics_report_from_json(const nlohmann::json& j);

/// Scores the median slice of each bundle against the raw (unfilled)
/// observations of `city`. Window rows pool every pair inside the window.
MetricsReport window_report(const std::vector<ForecastBundle>& forecasts, const PreparedCity& city,
                            std::string label = {});

enum class AblationArm { All, DeMet, DeEms, StnOnly };

std::string_view arm_name(AblationArm arm);
AblationArm parse_arm(std::string_view name);
std::vector<AblationArm> parse_arms(std::string_view list);

struct AblationSpec {
    AblationArm arm = AblationArm::All;
    InputMask mask() const;
};

/// The dataset is cut into consecutive blocks of `block_hours`; every
/// `holdout_every`-th block is held out for testing and no training window
/// touches it.
struct AblationSetup {
    std::size_t window_stride = 6;
    std::size_t block_hours = 168;
    std::size_t holdout_every = 5;
    std::size_t forecast_stride = 24; ///< hours between held-out initialisations
    std::size_t forecast_steps = 12;
    void validate() const;
};

struct AblationResult {
    AblationArm arm = AblationArm::All;
    TrainReport train;
    MetricsReport report;
    /// Pooled RMSE of one-step median forecasts on held-out windows, normalised units.
    double heldout_rmse = 0.0;
    std::size_t heldout_windows = 0;

    nlohmann::ordered_json to_json() const;
};

bool is_heldout_hour(std::size_t hour, const AblationSetup& setup);

/// Trains the 6-hour model with the arm's modalities zeroed at the model
/// boundary and scores it on the held-out tail of the dataset.
AblationResult run_ablation(const AblationSpec& spec, const PreparedCity& city, const ModelConfig& mcfg,
                            const TrainConfig& tcfg, const AblationSetup& setup = {});

/// Pooled normalised RMSE of one-step median forecasts.
double one_step_rmse(const ForecastModel& model, const std::vector<TrainingSample>& samples);

} // namespace aircast
