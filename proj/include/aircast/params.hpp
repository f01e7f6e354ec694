#pragma once

#include "aircast/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace aircast::nn {

/// A trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor first_moment;
    Tensor second_moment;
};

/// Named parameters in creation order. Addresses stay stable for the
/// lifetime of the store, so modules may hold raw `Parameter*`.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(ParamStore&&) noexcept = default;
    ParamStore& operator=(ParamStore&&) noexcept = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;

    Parameter& create(const std::string& name, Tensor init);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t element_count() const;

    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    void zero_grad();
    double grad_norm() const;
    void scale_grad(double s);

    /// Copies values (not optimizer state) from a store with identical layout.
    void copy_values_from(const ParamStore& other);

    std::int64_t step = 0;

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update using the gradients stored in `params`.
void adam_step(ParamStore& params, const AdamConfig& cfg);

/// Writes `manifest.json` plus one little-endian f64 blob per tensor.
void save_checkpoint(const ParamStore& params, const std::filesystem::path& dir);
/// Loads values and optimizer state into an already-structured store.
void load_checkpoint(ParamStore& params, const std::filesystem::path& dir);

// Initialisers.
Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng);

} // namespace aircast::nn
