#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtf/estimator.hpp"
#include "dtf/fusion.hpp"
#include "dtf/grid.hpp"
#include "dtf/inversion.hpp"
#include "dtf/metrics.hpp"
#include "dtf/net.hpp"

namespace dtf {

// Losses ------------------------------------------------------------------------

struct RobustLossConfig {
    double epsilon = 0.01;
    double exponent = 0.4;
    void validate() const;
    friend bool operator==(const RobustLossConfig&, const RobustLossConfig&) = default;
};

/// (1 / N) * sum over valid pixels of (|est - gt|_1 + epsilon)^exponent, with the
/// L1 norm taken over the four channels. When `grad` is given it receives
/// dL/d(est); channels with exactly zero error get subgradient 0.
double robust_loss(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid,
                   const RobustLossConfig& cfg = {}, Grid2D* grad = nullptr);

struct LossTerms {
    double fw = 0.0;
    double inv = 0.0;
    double fused = 0.0;
    double total() const { return fw + inv + fused; }
};

/// Multi-stage loss: robust loss of the forward, inverted backward and fused
/// estimates against the same forward ground truth.
LossTerms total_loss(const SceneFlowField& fw, const SceneFlowField& inv, const SceneFlowField& fused,
                     const SceneFlowField& gt, const PixelMask& valid, const RobustLossConfig& cfg = {});

/// Mean squared error over valid pixels and all four channels.
double mse_loss(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid, Grid2D* grad = nullptr);

// Optimizer and schedules ------------------------------------------------------

struct LrStage {
    int start_epoch = 0;
    double rate = 1e-4;
    friend bool operator==(const LrStage&, const LrStage&) = default;
};

struct TrainSchedule {
    int epochs = 30;
    int batch_size = 1;
    std::vector<LrStage> lr_stages{{0, 1e-4}, {20, 1e-5}};
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
    double rate_at(int epoch) const;

    friend bool operator==(const TrainSchedule&, const TrainSchedule&) = default;
};

/// "desk" (30 epochs, batch 1, 1e-4 -> 1e-5 at 20), "paper-inverter"
/// (40 epochs, batch 4, 1e-4 -> 5e-5 at 20 -> 1e-5 at 30) and "paper-finetune"
/// (100 epochs, batch 1, 5e-5 -> 1e-5 at 75).
TrainSchedule schedule_preset(std::string_view name);

struct AdamState {
    NetworkParams m;
    NetworkParams v;
    std::uint64_t step = 0;
};

AdamState make_adam_state(const NetworkParams& params);

/// One bias-corrected Adam update at learning rate `rate`. Aborts without
/// touching the parameters when a gradient is not finite.
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const TrainSchedule& schedule,
               double rate);

// Training procedures ----------------------------------------------------------

struct EpochLog {
    int epoch = 0;  ///< 1-based
    double rate = 0.0;
    LossTerms loss;  ///< inverter pretraining reports its MSE in `inv`
    std::optional<EvalReport> validation;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainingOptions {
    /// Held-out samples evaluated after every epoch; selects the best model.
    std::span<const FrameTripletSample> validation;
    EpochCallback on_epoch;
    /// When set, the full optimizer state is written here after every epoch.
    std::filesystem::path state_path;
    /// Continue from `state_path` if it exists.
    bool resume = false;
    /// Stop after this many epochs in total (for interrupted runs); -1 = schedule length.
    int stop_after_epoch = -1;
    RobustLossConfig loss;
};

struct InverterTrainingResult {
    InverterNetwork final_model;
    InverterNetwork best_model;
    int best_epoch = 0;
    std::vector<EpochLog> history;
};

/// Supervised pretraining: backward ground truth in, forward ground truth out, MSE.
InverterTrainingResult train_inverter(std::span<const FrameTripletSample> data, const TrainSchedule& schedule,
                                      const TrainingOptions& options = {});

/// OF outlier rate (percent, pixel-weighted) of a learned or baseline inverter
/// applied to backward ground truth, on the pixels valid in both directions.
double inverter_flow_outlier_rate(std::span<const FrameTripletSample> data, const InverterNetwork* inverter);

struct PipelineModel {
    InverterNetwork inverter;
    FusionNetwork fusion;
};

struct PipelineTrainingResult {
    PipelineModel final_model;
    PipelineModel best_model;
    int best_epoch = 0;
    std::vector<EpochLog> history;
};

/// Forward and backward estimates of one sample under an estimator configuration.
struct EstimatePair {
    SceneFlowField fw;
    SceneFlowField bw;
};

EstimatePair estimate_pair(const FrameTripletSample& sample, const EstimatorConfig& config);

/// Joint fine-tuning of inverter and fusion network under the multi-stage loss.
PipelineTrainingResult train_pipeline(std::span<const FrameTripletSample> data, const EstimatorConfig& estimator,
                                      FusionVariant variant, const TrainSchedule& schedule,
                                      const InverterNetwork& initial_inverter, const TrainingOptions& options = {});

struct PipelineOutput {
    SceneFlowField fw;
    SceneFlowField inv;
    FusionWeights weights;
    SceneFlowField fused;
};

PipelineOutput run_pipeline(const PipelineModel& model, const EstimatePair& estimates);

}  // namespace dtf
