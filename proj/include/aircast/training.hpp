#pragma once

#include "aircast/model.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace aircast {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    std::vector<double> quantiles{0.1, 0.5, 0.9};
    std::uint64_t seed = 0;
    std::size_t patience = 0; ///< epochs without validation gain before stopping; 0 disables
    double clip_norm = 1.0;   ///< global gradient-norm clip; 0 disables
    double val_fraction = 0.1;
    /// Keeps the day-of-year table at its initial values. Useful when the
    /// data covers less than a year and every row would be fitted to one day.
    bool freeze_doy = false;

    void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct TrainReport {
    std::string model_kind;
    std::uint64_t seed = 0;
    std::size_t train_windows = 0;
    std::size_t val_windows = 0;
    double initial_train_loss = 0.0;
    std::vector<double> train_loss; ///< mean batch loss per epoch
    std::vector<double> val_loss;   ///< empty without a validation split
    std::size_t best_epoch = 0;     ///< 1-based; 0 means the initial weights
    double best_val_loss = 0.0;
    std::string checkpoint;
    double wall_seconds = 0.0;

    /// Deterministic fields only; wall-clock is kept out so reports compare bitwise.
    nlohmann::ordered_json to_json() const;
};

/// A window turned into model inputs and a target in model layout.
struct TrainingSample {
    ModelInputs inputs;
    Tensor target; ///< [N_s x frames x 6]
};

std::vector<TrainingSample> make_samples(const PreparedCity& city, const std::vector<SampleWindow>& windows,
                                         InputMask mask = {});

/// Mean pinball loss of pred [.. x Q] against target [..].
double quantile_loss(const Tensor& pred, const Tensor& target, std::span<const double> taus);

/// Mean loss of `model` over `samples` without touching gradients.
double evaluate_loss(const ForecastModel& model, const std::vector<TrainingSample>& samples);

struct TrainResult {
    ForecastModel model;
    TrainReport report;
};

/// Trains from the seed-derived initialisation of `mcfg`. The last
/// `val_fraction` of samples (chronological order) is held out and the
/// best-validation weights are returned.
TrainResult train_model(ModelKind kind, const std::vector<TrainingSample>& samples, const ModelConfig& mcfg,
                        const TrainConfig& tcfg);
/// Continues training `initial` in place of a fresh initialisation.
TrainResult train_model(ForecastModel initial, const std::vector<TrainingSample>& samples, const TrainConfig& tcfg);

TrainResult train_6h(const std::vector<TrainingSample>& samples, const ModelConfig& mcfg, const TrainConfig& tcfg);
TrainResult train_interp(const std::vector<TrainingSample>& samples, const ModelConfig& mcfg,
                         const TrainConfig& tcfg);

struct TensorCheck {
    std::string model;
    std::string name;
    std::size_t elements = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

struct GradientReport {
    std::vector<TensorCheck> tensors;
    double max_rel_error = 0.0;
    double tolerance = 1e-3;
    bool passed() const { return max_rel_error <= tolerance; }
    nlohmann::ordered_json to_json() const;
};

/// Smallest configuration the gradient check runs on.
ModelConfig micro_model_config();

/// Central finite differences against backward() for every parameter tensor
/// of both models on a random micro instance.
GradientReport verify_gradients(const ModelConfig& mcfg, std::uint64_t seed, double step = 1e-5);

} // namespace aircast
