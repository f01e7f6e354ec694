#pragma once

#include "aircast/evaluation.hpp"
#include "aircast/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace aircast {

/// Fully resolved parameters of one command: defaults, then the config
/// file, then flags. Serialised into every run directory as run_config.json
/// (without the output path, so a re-run elsewhere reproduces it).
struct RunConfig {
    std::string command;
    std::uint64_t seed = 0;
    std::string city;
    std::filesystem::path out;
    std::string data;
    std::string checkpoint;
    std::string interp_checkpoint;
    std::string forecast;
    std::string report;
    SynthConfig synth;
    ModelConfig model;
    TrainConfig train;
    std::size_t stride = 6;
    std::size_t max_gap = 3;
    std::vector<std::string> inits;
    std::size_t init_every = 0;
    std::size_t steps = 12;
    std::vector<std::string> arms{"ALL", "DEMET", "DEEMS", "STN_ONLY"};
    AblationSetup ablation;

    nlohmann::ordered_json to_json() const;
};

/// Overlays a config file object onto `base`; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base);

/// Entry point of the `aircast` binary. Returns the process exit status:
/// 0 success, 1 validation or runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

} // namespace aircast
