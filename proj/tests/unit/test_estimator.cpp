#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dtf/data_io.hpp"
#include "dtf/error.hpp"
#include "dtf/estimator.hpp"
#include "dtf/metrics.hpp"
#include "dtf/synth.hpp"

namespace dtf {
namespace {

namespace fs = std::filesystem;

FrameTripletSample moving_sample() {
    SceneConfig cfg;
    cfg.objects.push_back({2.0, 2.0, {0.0, 0.0, 6.0}, {0.5, 0.0, 0.0}, {0, 0, 0}, 4});
    return generate_sample(cfg, "est");
}

TEST(NoisyOracle, ZeroNoiseEqualsGroundTruthOnNoc) {
    const FrameTripletSample s = moving_sample();
    EstimatorConfig cfg;
    cfg.sigma_flow = cfg.sigma_disp = 0.0;
    for (Direction d : {Direction::forward, Direction::backward}) {
        const SceneFlowField e = estimate(s, d, cfg);
        EXPECT_EQ(e.direction(), d);
        for (int i = 0; i < s.height(); ++i)
            for (int j = 0; j < s.width(); ++j)
                if (s.noc(d)(i, j)) {
                    for (int c = 0; c < 4; ++c) ASSERT_EQ(e.at(i, j, c), s.gt(d).at(i, j, c));
                }
    }
}

TEST(NoisyOracle, Deterministic) {
    const FrameTripletSample s = moving_sample();
    EstimatorConfig cfg;
    EXPECT_EQ(estimate(s, Direction::forward, cfg), estimate(s, Direction::forward, cfg));
    EstimatorConfig other = cfg;
    other.seed = 1;
    EXPECT_NE(estimate(s, Direction::forward, cfg), estimate(s, Direction::forward, other));
}

TEST(NoisyOracle, CorruptionConfinedToOccludedTemporalChannels) {
    const FrameTripletSample s = moving_sample();
    for (auto corruption : {OcclusionCorruption::large_noise, OcclusionCorruption::hold_occluder}) {
        EstimatorConfig plain, corrupt;
        plain.occ_corruption = OcclusionCorruption::none;
        corrupt.occ_corruption = corruption;
        const SceneFlowField a = estimate(s, Direction::forward, plain), b = estimate(s, Direction::forward, corrupt);
        std::size_t changed = 0;
        for (int i = 0; i < s.height(); ++i)
            for (int j = 0; j < s.width(); ++j) {
                EXPECT_EQ(a.at(i, j, kDisp0), b.at(i, j, kDisp0));
                const bool differs = a.at(i, j, kFlowU) != b.at(i, j, kFlowU) || a.at(i, j, kDisp1) != b.at(i, j, kDisp1);
                if (s.noc_fw(i, j)) {
                    ASSERT_FALSE(differs);
                }
                changed += differs;
            }
        EXPECT_GT(changed, 0u) << to_string(corruption);
    }
}

TEST(NoisyOracle, OccludedFlowOutliersDominate) {
    const FrameTripletSample s = moving_sample();
    EstimatorConfig cfg;
    cfg.sigma_flow = 0.5;
    cfg.occ_sigma = 10.0;
    const EvalReport r = evaluate(estimate(s, Direction::forward, cfg), s.gt_forward, s.valid_fw, s.noc_fw);
    EXPECT_GT(*r.rate(Component::OF, Region::occ), 50.0);
    EXPECT_LT(*r.rate(Component::OF, Region::noc), 1.0);
}

TEST(NoisyOracle, NoiseIsZeroMean) {
    const FrameTripletSample s = moving_sample();
    for (double length : {0.0, 3.0}) {
        Grid2D mean(s.height(), s.width(), 4);
        const int n = 200;
        for (int k = 0; k < n; ++k) {
            EstimatorConfig cfg;
            cfg.seed = std::uint64_t(k);
            cfg.noise_length = length;
            const SceneFlowField e = estimate(s, Direction::forward, cfg);
            for (std::size_t p = 0; p < mean.size(); ++p) mean.values()[p] += (e.grid().values()[p] - s.gt_forward.grid().values()[p]) / n;
        }
        // Standard error is sigma / sqrt(n) = 0.035 px for flow; allow 5 of them.
        for (int i = 0; i < s.height(); ++i)
            for (int j = 0; j < s.width(); ++j)
                if (s.noc_fw(i, j)) {
                    ASSERT_LT(std::abs(mean.at(i, j, kFlowU)), 5 * 0.5 / std::sqrt(double(n)));
                }
    }
}

TEST(NoisyOracle, CorrelatedNoiseKeepsPerPixelSigma) {
    const FrameTripletSample s = moving_sample();
    EstimatorConfig cfg;
    cfg.occ_corruption = OcclusionCorruption::none;
    cfg.noise_length = 3.0;
    double sum2 = 0.0, lag = 0.0;
    std::size_t n = 0, nl = 0;
    for (int k = 0; k < 40; ++k) {
        cfg.seed = std::uint64_t(k);
        const SceneFlowField e = estimate(s, Direction::forward, cfg);
        for (int i = 0; i < s.height(); ++i)
            for (int j = 0; j < s.width(); ++j) {
                const double r = e.at(i, j, kFlowU) - s.gt_forward.at(i, j, kFlowU);
                sum2 += r * r;
                ++n;
                if (j + 1 < s.width()) {
                    lag += r * (e.at(i, j + 1, kFlowU) - s.gt_forward.at(i, j + 1, kFlowU));
                    ++nl;
                }
            }
    }
    const double var = sum2 / double(n);
    EXPECT_NEAR(std::sqrt(var), 0.5, 0.03);
    // Neighbour correlation of a Gaussian-smoothed field: exp(-1 / (4 L^2)) = 0.97.
    EXPECT_GT(lag / double(nl) / var, 0.9);
}

TEST(ExternalEstimator, RoundTripAndMissingComponent) {
    const fs::path root = fs::temp_directory_path() / "dtf_test_external";
    fs::remove_all(root);
    const FrameTripletSample s = moving_sample();
    write_scene_flow(root, s.id, s.gt_forward, PixelMask(s.height(), s.width(), true));
    EstimatorConfig cfg;
    cfg.kind = EstimatorKind::external;
    cfg.external_root = root;
    const SceneFlowField e = estimate(s, Direction::forward, cfg);
    for (std::size_t k = 0; k < e.grid().size(); ++k) {
        const int c = int(k % 4);
        EXPECT_LE(std::abs(e.grid().values()[k] - s.gt_forward.grid().values()[k]), c < 2 ? 1.0 / 128 : 1.0 / 512);
    }
    fs::remove(disp1_path(root, s.id, Direction::forward));
    try {
        load_external_field(root, s.id, Direction::forward);
        FAIL() << "expected a DataError";
    } catch (const DataError& err) {
        EXPECT_NE(std::string(err.what()).find("d1"), std::string::npos) << err.what();
    }
    fs::remove_all(root);
}

TEST(ExternalEstimator, AllInvalidFilesGiveEmptyMask) {
    const fs::path root = fs::temp_directory_path() / "dtf_test_external_empty";
    fs::remove_all(root);
    const SceneFlowField f(4, 5, Direction::forward);
    write_scene_flow(root, "z", f, PixelMask(4, 5, false));
    const LoadedField loaded = load_external_field(root, "z", Direction::forward);
    EXPECT_EQ(loaded.valid.count(), 0u);
    fs::remove_all(root);
}

TEST(EstimatorConfig, ValidationAndNames) {
    EstimatorConfig cfg;
    cfg.sigma_flow = -1.0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    EXPECT_EQ(parse_estimator_kind("external"), EstimatorKind::external);
    EXPECT_THROW(parse_estimator_kind("pwoc"), InvalidArgument);
    EXPECT_EQ(parse_occlusion_corruption(to_string(OcclusionCorruption::hold_occluder)),
              OcclusionCorruption::hold_occluder);
}

}  // namespace
}  // namespace dtf
