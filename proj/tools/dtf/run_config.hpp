#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "dtf/estimator.hpp"
#include "dtf/fusion.hpp"
#include "dtf/synth.hpp"
#include "dtf/training.hpp"

namespace dtf::cli {

enum class InverterMode { learned, constant_linear };

std::string_view to_string(InverterMode m);
InverterMode parse_inverter_mode(std::string_view s);

struct GenerateSettings {
    std::string preset = "traffic";
    SceneDistribution scene = scene_preset("traffic");
    int count = 10;
    std::string split = "train";
    friend bool operator==(const GenerateSettings&, const GenerateSettings&) = default;
};

struct DataSettings {
    std::filesystem::path train;       ///< manifest of the training split
    std::filesystem::path validation;  ///< optional held-out manifest
    std::filesystem::path dataset;     ///< manifest used by fuse and eval
    friend bool operator==(const DataSettings&, const DataSettings&) = default;
};

struct ModelSettings {
    FusionVariant variant = FusionVariant::basic;
    InverterMode inverter = InverterMode::learned;
    std::filesystem::path inverter_checkpoint;
    std::filesystem::path fusion_checkpoint;
    bool oracle = false;
    friend bool operator==(const ModelSettings&, const ModelSettings&) = default;
};

struct TrainSettings {
    std::string preset = "desk";
    TrainSchedule schedule;
    RobustLossConfig loss;
    bool resume = false;
    int stop_after_epoch = -1;
    friend bool operator==(const TrainSettings&, const TrainSettings&) = default;
};

struct EvalSettings {
    std::filesystem::path estimates;  ///< root holding forward fields in the dataset layout
    std::filesystem::path report;     ///< existing report file to post-process instead
    std::optional<double> reconstruct_occ;
    bool flow_images = false;
    friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

/// Everything a command needs, resolved from defaults, presets, the config file
/// and command-line overrides (in that order).
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";
    GenerateSettings generate;
    DataSettings data;
    EstimatorConfig estimator;
    ModelSettings model;
    TrainSettings train;
    EvalSettings eval;

    void validate() const;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// INI-style text; every field is written, reals with round-trip precision.
std::string to_text(const RunConfig& config);
/// Relative paths are kept as written.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

/// "ratio=R" or a bare number.
double parse_ratio_flag(std::string_view s);

/// "0:1e-4, 20:1e-5"
std::string format_lr_stages(const std::vector<LrStage>& stages);
std::vector<LrStage> parse_lr_stages(std::string_view s);

}  // namespace dtf::cli
