#pragma once

#include "aircast/data_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace aircast {

std::vector<std::string> default_met_channels();
std::vector<std::string> default_ems_channels();

/// Parameters of the synthetic city generator. Pollutant concentrations are
/// a diurnal + seasonal baseline, an emission term scaled by wind-driven
/// ventilation, a regional transport term along the wind, a temperature
/// term for O3, and AR(1) noise.
struct SynthConfig {
    std::string city = "synthetic";
    std::size_t n_stations = 6;
    double origin_lat = 39.0;
    double origin_lon = 115.5;
    double resolution = 0.1;
    std::size_t n_lat = 20;
    std::size_t n_lon = 20;
    std::size_t days = 60;
    std::string start = "2023-01-01T00:00:00Z";
    std::vector<std::string> met_channels = default_met_channels();
    std::vector<std::string> ems_channels = default_ems_channels();
    double noise_amplitude = 1.0;
    double met_influence = 1.0;
    double emission_influence = 1.0;
    double diurnal_amplitude = 0.25;
    double seasonal_amplitude = 0.15;
    double noise_persistence = 0.95;
    double missing_fraction = 0.0;
};

/// Throws ValidationError listing every offending field.
void validate(const SynthConfig& cfg);

nlohmann::ordered_json to_json(const SynthConfig& cfg);
/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

/// Deterministic for a fixed (config, seed). Grid values are rounded to
/// float32 so the on-disk format round-trips exactly.
CityDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed);

} // namespace aircast
