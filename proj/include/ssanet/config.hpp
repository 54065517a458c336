#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ssanet/eval.hpp"

namespace ssanet {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Everything a run needs, serialized as one flat JSON object. Parsing starts
// from the defaults and rejects unknown keys.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    CVConfig cv;
    SyntheticSpec synth;
    double val_fraction = 0.2; // held-out share for the `train` subcommand
    std::uint64_t seed = 0;

    void validate() const;
    // Sets the run seed and the seeds derived from it.
    void set_seed(std::uint64_t s);
};

std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Known keys in emission order.
std::vector<std::string> config_keys();

// A saved model is a directory holding config.json and params/<name>.vtf.
void save_model(const std::filesystem::path& dir, const Model& model, const RunConfig& cfg);
struct LoadedModel {
    RunConfig config;
    Model model;
};
LoadedModel load_model(const std::filesystem::path& dir);

} // namespace ssanet
