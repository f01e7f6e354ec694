#pragma once

#include "aircast/coupling.hpp"
#include "aircast/data_model.hpp"
#include "aircast/site_interaction.hpp"

#include <filesystem>
#include <memory>
#include <vector>

#include <json.hpp>

namespace aircast {

enum class ModelKind { SixHour, Interpolator };

std::string_view model_kind_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
    std::size_t d_model = 32;
    std::size_t temb_dim = 8;
    std::size_t mlp_hidden = 64;
    std::size_t resnet_depth = 2;
    std::size_t resnet_width = 16;
    std::vector<double> quantiles{0.1, 0.5, 0.9};
    std::size_t horizon_steps = 12;
    std::size_t pollutants = kPollutants;
    std::size_t met_channels = 19;
    std::size_t ems_channels = 7;
    std::size_t stations = 0;
    std::size_t n_lat = 0;
    std::size_t n_lon = 0;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t quantile_count() const { return quantiles.size(); }
    std::size_t median_index() const;
    std::size_t site_features() const { return 2 * pollutants + 4 + temb_dim; }
    std::size_t grid_channels() const { return met_channels + ems_channels + 2; }
};

nlohmann::ordered_json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
/// Copies the city-derived sizes (stations, channels, grid) into `base`.
ModelConfig model_config_for(const PreparedCity& city, ModelConfig base = {});

/// Everything one forward pass consumes, already normalised.
struct ModelInputs {
    Tensor x_prev;   ///< [N_s x 6]
    Tensor x_curr;   ///< [N_s x 6]
    Tensor site_pe;  ///< [N_s x 4]
    Tensor grid;     ///< [C x n_lat x n_lon]
    TimeCode timecode;
};

struct ModelOutputs {
    nn::Var prediction;      ///< [N_s x frames x 6 x Q]
    nn::Var site_attention;  ///< [N_s x N_s]
    nn::Var cross_attention; ///< [N_s x N_grids]
};

/// The site-interaction + coupling network with a linear quantile head.
/// The 6-hour model emits one frame, the interpolator five.
class ForecastModel {
public:
    ForecastModel(ModelConfig cfg, ModelKind kind);
    ForecastModel(const ForecastModel& other);
    ForecastModel& operator=(const ForecastModel&) = delete;
    ForecastModel(ForecastModel&&) noexcept = default;
    ForecastModel& operator=(ForecastModel&&) noexcept = default;

    const ModelConfig& config() const { return cfg_; }
    ModelKind kind() const { return kind_; }
    std::size_t frames() const { return kind_ == ModelKind::SixHour ? 1 : 5; }
    nn::ParamStore& params() { return *store_; }
    const nn::ParamStore& params() const { return *store_; }

    ModelOutputs forward(nn::Graph& g, const ModelInputs& in) const;
    /// Zeroes the output head so every prediction is exactly zero.
    void zero_head();

    /// Writes model.json and the parameter checkpoint into `dir`.
    void save(const std::filesystem::path& dir) const;
    static ForecastModel load(const std::filesystem::path& dir);

private:
    void build();

    ModelConfig cfg_;
    ModelKind kind_;
    std::unique_ptr<nn::ParamStore> store_;
    TemporalEmbedding temb_;
    SiteAttentionWeights site_;
    CouplingWeights coupling_;
    nn::Parameter* head_w_ = nullptr;
    nn::Parameter* head_b_ = nullptr;
};

/// Model inputs for a window. Grid channels of modalities switched off in
/// `mask` are zero.
ModelInputs make_inputs(const PreparedCity& city, const SampleWindow& w, InputMask mask = {});
/// Window target in the model's [N_s x frames x 6] layout.
Tensor model_target(const SampleWindow& w);

} // namespace aircast
