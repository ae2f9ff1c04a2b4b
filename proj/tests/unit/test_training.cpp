#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "dtf/checkpoint.hpp"
#include "dtf/error.hpp"
#include "dtf/metrics.hpp"
#include "dtf/synth.hpp"
#include "dtf/training.hpp"

namespace dtf {
namespace {

namespace fs = std::filesystem;

SceneFlowField field_1px(double u, double v, double d0, double d1) {
    SceneFlowField f(1, 1, Direction::forward);
    f.at(0, 0, kFlowU) = u;
    f.at(0, 0, kFlowV) = v;
    f.at(0, 0, kDisp0) = d0;
    f.at(0, 0, kDisp1) = d1;
    return f;
}

std::vector<FrameTripletSample> small_dataset(std::string_view preset, int n, std::uint64_t seed0 = 0) {
    SceneDistribution dist = scene_preset(preset);
    dist.width = 20;
    dist.height = 16;
    std::vector<FrameTripletSample> out;
    for (int k = 0; k < n; ++k)
        out.push_back(generate_sample(sample_scene(dist, seed0 + std::uint64_t(k)), "s" + std::to_string(k)));
    return out;
}

TEST(RobustLoss, ScalarFixtures) {
    const PixelMask one(1, 1, true);
    const SceneFlowField gt = field_1px(1, 2, 3, 4);
    EXPECT_NEAR(robust_loss(gt, gt, one), std::pow(0.01, 0.4), 1e-12);
    EXPECT_NEAR(robust_loss(gt, gt, one), 0.158489, 1e-6);
    EXPECT_NEAR(robust_loss(field_1px(1.5, 2, 3, 3.5), gt, one), std::exp(0.4 * std::log1p(0.01)), 1e-12);
    EXPECT_NEAR(robust_loss(field_1px(1.5, 2, 3, 3.5), gt, one), 1.003990, 5e-6);
    EXPECT_NEAR(total_loss(gt, gt, gt, gt, one).total(), 0.475468, 1e-6);
}

TEST(RobustLoss, MeanOverValidPixelsAndMasking) {
    SceneFlowField gt(2, 3, Direction::forward), est(2, 3, Direction::forward);
    for (std::size_t k = 0; k < est.grid().size(); k += 4) est.grid().values()[k] = 1.0;
    PixelMask one(2, 3, false), all(2, 3, true);
    one.set(1, 2, true);
    EXPECT_DOUBLE_EQ(robust_loss(est, gt, one), robust_loss(est, gt, all));
    EXPECT_THROW(robust_loss(est, gt, PixelMask(2, 3, false)), InvalidArgument);
    EXPECT_THROW(robust_loss(est, gt, PixelMask(2, 2, true)), ShapeError);
}

TEST(RobustLoss, MonotoneAndBoundedBelow) {
    const PixelMask one(1, 1, true);
    const SceneFlowField gt = field_1px(0, 0, 5, 5);
    double prev = robust_loss(gt, gt, one);
    EXPECT_GE(prev, std::pow(0.01, 0.4));
    for (double e : {0.01, 0.1, 1.0, 10.0}) {
        const double l = robust_loss(field_1px(e, 0, 5, 5), gt, one);
        EXPECT_GT(l, prev);
        prev = l;
    }
}

TEST(RobustLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    SceneFlowField gt(5, 4, Direction::forward), est(5, 4, Direction::forward);
    for (double& v : gt.grid().values()) v = u(rng);
    for (std::size_t k = 0; k < est.grid().size(); ++k) est.grid().values()[k] = gt.grid().values()[k] + u(rng);
    PixelMask valid(5, 4, true);
    valid.set(0, 0, false);
    Grid2D grad;
    robust_loss(est, gt, valid, {}, &grad);
    const double h = 1e-6;
    for (std::size_t k = 0; k < est.grid().size(); ++k) {
        SceneFlowField p = est, m = est;
        p.grid().values()[k] += h;
        m.grid().values()[k] -= h;
        const double fd = (robust_loss(p, gt, valid) - robust_loss(m, gt, valid)) / (2 * h);
        ASSERT_NEAR(grad.values()[k], fd, 1e-3 * std::max(1e-6, std::abs(fd))) << k;
    }
    // Exact zero error takes subgradient 0.
    robust_loss(gt, gt, valid, {}, &grad);
    for (double g : grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(TotalLoss, TermsAreAdditiveAndIndependent) {
    const PixelMask one(1, 1, true);
    const SceneFlowField gt = field_1px(1, 1, 4, 4), fw = field_1px(2, 1, 4, 4), inv = field_1px(1, 0, 4, 3),
                         fused = field_1px(1, 1, 4.5, 4);
    const LossTerms t = total_loss(fw, inv, fused, gt, one);
    EXPECT_EQ(t.fw, robust_loss(fw, gt, one));
    EXPECT_EQ(t.inv, robust_loss(inv, gt, one));
    EXPECT_EQ(t.fused, robust_loss(fused, gt, one));
    EXPECT_EQ(t.total(), t.fw + t.inv + t.fused);
    const LossTerms t2 = total_loss(field_1px(5, 1, 4, 4), inv, fused, gt, one);
    EXPECT_NE(t2.fw, t.fw);
    EXPECT_EQ(t2.inv, t.inv);
    EXPECT_EQ(t2.fused, t.fused);
}

TEST(MseLoss, ValueAndGradient) {
    const PixelMask one(1, 1, true);
    Grid2D grad;
    EXPECT_DOUBLE_EQ(mse_loss(field_1px(1, 0, 0, 2), field_1px(0, 0, 0, 0), one, &grad), (1.0 + 4.0) / 4.0);
    EXPECT_DOUBLE_EQ(grad.at(0, 0, 0), 0.5);
    EXPECT_DOUBLE_EQ(grad.at(0, 0, 3), 1.0);
}

TEST(Adam, FirstStepMovesByRateAgainstGradientSign) {
    NetworkParams params(1), grads(1);
    params[0].weights = Eigen::MatrixXd(1, 4);
    params[0].weights << 0.5, -0.25, 2.0, 1.0;
    params[0].bias = Eigen::VectorXd::Zero(1);
    grads[0].weights = Eigen::MatrixXd(1, 4);
    grads[0].weights << 3.0, -0.001, 1e3, 0.0;
    grads[0].bias = Eigen::VectorXd::Constant(1, -7.0);
    AdamState state = make_adam_state(params);
    const TrainSchedule sched;
    adam_step(params, grads, state, sched, 1e-3);
    EXPECT_EQ(state.step, 1u);
    EXPECT_NEAR(params[0].weights(0, 0), 0.5 - 1e-3, 1e-8);
    EXPECT_NEAR(params[0].weights(0, 1), -0.25 + 1e-3, 1e-8);
    EXPECT_NEAR(params[0].weights(0, 2), 2.0 - 1e-3, 1e-8);
    EXPECT_EQ(params[0].weights(0, 3), 1.0);
    EXPECT_NEAR(params[0].bias(0), 1e-3, 1e-8);
}

TEST(Adam, NonFiniteGradientAbortsAndNamesLayer) {
    NetworkParams params(2), grads(2);
    for (auto* p : {&params, &grads})
        for (auto& l : *p) {
            l.weights = Eigen::MatrixXd::Constant(1, 2, 1.0);
            l.bias = Eigen::VectorXd::Zero(1);
        }
    grads[1].weights(0, 1) = std::numeric_limits<double>::quiet_NaN();
    AdamState state = make_adam_state(params);
    const NetworkParams before = params;
    try {
        adam_step(params, grads, state, TrainSchedule{}, 1e-3);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find('1'), std::string::npos) << e.what();
    }
    EXPECT_EQ(params[0].weights, before[0].weights);
    EXPECT_EQ(params[1].weights, before[1].weights);
    EXPECT_EQ(state.step, 0u);
}

TEST(Schedule, PresetsAndRates) {
    const TrainSchedule desk = schedule_preset("desk");
    EXPECT_EQ(desk.epochs, 30);
    EXPECT_EQ(desk.batch_size, 1);
    EXPECT_EQ(desk.rate_at(0), 1e-4);
    EXPECT_EQ(desk.rate_at(19), 1e-4);
    EXPECT_EQ(desk.rate_at(20), 1e-5);
    const TrainSchedule inv = schedule_preset("paper-inverter");
    EXPECT_EQ(inv.epochs, 40);
    EXPECT_EQ(inv.batch_size, 4);
    EXPECT_EQ(inv.rate_at(25), 5e-5);
    EXPECT_EQ(inv.rate_at(39), 1e-5);
    const TrainSchedule ft = schedule_preset("paper-finetune");
    EXPECT_EQ(ft.epochs, 100);
    EXPECT_EQ(ft.rate_at(74), 5e-5);
    EXPECT_EQ(ft.rate_at(75), 1e-5);
    EXPECT_THROW(schedule_preset("fast"), InvalidArgument);
    TrainSchedule bad = desk;
    bad.lr_stages = {{5, 1e-4}};
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(TrainInverter, LossDecreasesOverFirstEpochs) {
    const auto data = small_dataset("accelerated", 8);
    TrainSchedule sched = schedule_preset("desk");
    sched.epochs = 5;
    const InverterTrainingResult r = train_inverter(data, sched);
    ASSERT_EQ(r.history.size(), 5u);
    for (const EpochLog& log : r.history) ASSERT_TRUE(std::isfinite(log.loss.inv));
    EXPECT_LT(r.history.back().loss.inv, r.history.front().loss.inv);
}

TEST(TrainInverter, LearnsIdentityMotionToNearZeroLoss) {
    SceneDistribution dist = scene_preset("static");
    dist.width = 20;
    dist.height = 16;
    dist.objects_min = dist.objects_max = 0;
    // Background only: every pixel keeps its disparity and has zero flow.
    std::vector<FrameTripletSample> data;
    for (std::uint64_t k = 0; k < 4; ++k) data.push_back(generate_sample(sample_scene(dist, k), "id" + std::to_string(k)));
    TrainSchedule sched;
    sched.epochs = 1000;
    sched.batch_size = 4;
    sched.lr_stages = {{0, 1e-3}, {600, 1e-4}};
    const InverterTrainingResult r = train_inverter(data, sched);
    double mse = 0.0;
    for (const auto& s : data) {
        mse += mse_loss(invert(r.final_model, *s.gt_backward), s.gt_forward, mask_and(s.valid_fw, s.valid_bw)) / data.size();
    }
    EXPECT_LT(mse, 1e-3);
}

TEST(TrainInverter, MissingBackwardGroundTruthIsRejected) {
    auto data = small_dataset("static", 1);
    data[0].gt_backward.reset();
    EXPECT_THROW(train_inverter(data, TrainSchedule{}), DataError);
}

TEST(TrainInverter, ResumeReproducesUninterruptedRunBitwise) {
    const auto data = small_dataset("accelerated", 5);
    TrainSchedule sched;
    sched.epochs = 4;
    sched.batch_size = 2;
    sched.lr_stages = {{0, 1e-3}, {2, 1e-4}};
    const InverterTrainingResult full = train_inverter(data, sched);
    const InverterTrainingResult again = train_inverter(data, sched);
    EXPECT_EQ(encode_checkpoint(kInverterArchitecture, full.final_model.net),
              encode_checkpoint(kInverterArchitecture, again.final_model.net));

    const fs::path state = fs::temp_directory_path() / "dtf_test_resume_state.bin";
    fs::remove(state);
    TrainingOptions opts;
    opts.state_path = state;
    opts.stop_after_epoch = 2;
    const InverterTrainingResult first = train_inverter(data, sched, opts);
    EXPECT_EQ(first.history.size(), 2u);
    opts.stop_after_epoch = -1;
    opts.resume = true;
    const InverterTrainingResult resumed = train_inverter(data, sched, opts);
    EXPECT_EQ(resumed.history.size(), 4u);
    EXPECT_EQ(encode_checkpoint(kInverterArchitecture, full.final_model.net),
              encode_checkpoint(kInverterArchitecture, resumed.final_model.net));
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(resumed.history[k].loss.inv, full.history[k].loss.inv);
    fs::remove(state);
}

TEST(Pipeline, HalfWeightsGiveFusedRateBetweenCandidates) {
    const auto data = small_dataset("traffic", 6);
    EstimatorConfig est;
    PipelineModel model{build_inverter(1), build_fusion(FusionVariant::basic, 2)};
    // Zero head: all logits 0, so every weight is exactly 0.5.
    auto& head = model.fusion.net.params().back();
    head.weights.setZero();
    head.bias.setZero();
    for (const auto& s : data) {
        const PipelineOutput out = run_pipeline(model, estimate_pair(s, est));
        for (double w : out.weights.w_bw.values()) ASSERT_EQ(w, 0.5);
        // Averaging never creates an outlier that neither candidate had.
        const PixelMask bad_fw = scene_flow_outlier_map(out.fw, s.gt_forward, s.valid_fw);
        const PixelMask bad_inv = scene_flow_outlier_map(out.inv, s.gt_forward, s.valid_fw);
        const PixelMask bad = scene_flow_outlier_map(out.fused, s.gt_forward, s.valid_fw);
        for (std::size_t p = 0; p < bad.pixels(); ++p)
            if (bad.at_index(p)) {
                ASSERT_TRUE(bad_fw.at_index(p) || bad_inv.at_index(p));
            }
        for (std::size_t k = 0; k < out.fused.grid().size(); ++k) {
            const double a = out.fw.grid().values()[k], b = out.inv.grid().values()[k];
            ASSERT_GE(out.fused.grid().values()[k], std::min(a, b) - 1e-12);
            ASSERT_LE(out.fused.grid().values()[k], std::max(a, b) + 1e-12);
        }
    }
}

TEST(Pipeline, TrainingLogsAllThreeTermsAndReducesLoss) {
    const auto data = small_dataset("traffic", 4);
    const auto val = small_dataset("traffic", 2, 100);
    EstimatorConfig est;
    TrainSchedule sched;
    sched.epochs = 3;
    sched.lr_stages = {{0, 1e-4}};
    TrainingOptions opts;
    opts.validation = val;
    std::vector<EpochLog> seen;
    opts.on_epoch = [&](const EpochLog& l) { seen.push_back(l); };
    const PipelineTrainingResult r = train_pipeline(data, est, FusionVariant::basic, sched, build_inverter(0), opts);
    ASSERT_EQ(seen.size(), 3u);
    for (const EpochLog& l : seen) {
        EXPECT_GT(l.loss.fw, 0.0);
        EXPECT_GT(l.loss.inv, 0.0);
        EXPECT_GT(l.loss.fused, 0.0);
        EXPECT_TRUE(l.validation.has_value());
    }
    EXPECT_LT(seen.back().loss.total(), seen.front().loss.total());
    EXPECT_GE(r.best_epoch, 1);
    EXPECT_LE(r.best_epoch, 3);
}

}  // namespace
}  // namespace dtf
