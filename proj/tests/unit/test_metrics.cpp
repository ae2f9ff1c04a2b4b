#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dtf/error.hpp"
#include "dtf/metrics.hpp"

namespace dtf {
namespace {

// Independent outlier rule: magnitude test written out per component.
bool oracle_outlier(double err, double mag) { return err > 3.0 && err > 0.05 * mag; }

SceneFlowField field_1xn(const std::vector<std::array<double, 4>>& px) {
    SceneFlowField f(1, int(px.size()), Direction::forward);
    for (int j = 0; j < int(px.size()); ++j)
        for (int c = 0; c < 4; ++c) f.at(0, j, c) = px[std::size_t(j)][std::size_t(c)];
    return f;
}

TEST(IsOutlier, BothThresholdsMustBeExceeded) {
    EXPECT_FALSE(is_outlier(3.0, 1.0));     // abs not exceeded
    EXPECT_FALSE(is_outlier(4.0, 100.0));   // rel 4% not exceeded
    EXPECT_TRUE(is_outlier(4.0, 50.0));     // 8% and 4 px
    EXPECT_FALSE(is_outlier(5.0, 100.0));   // exactly 5 % is not greater
    EXPECT_TRUE(is_outlier(std::nan(""), 1.0));
}

TEST(ComponentOutlierMap, HandComputedQuadrants) {
    // D1 column is d0, everything else matches exactly unless noted.
    // gt d0 values and est d0 values per pixel with the expected D1 verdict.
    struct Case { double gt, est; bool outlier; };
    const Case cases[10] = {
        {10.0, 12.0, false},   // abs 2 <= 3, rel 20 %
        {10.0, 13.0, false},   // abs 3 exactly, rel 30 %
        {100.0, 104.0, false}, // abs 4 > 3, rel 4 % <= 5 %
        {200.0, 209.0, false}, // abs 9, rel 4.5 %
        {1.0, 3.5, false},     // rel 250 %, abs 2.5
        {0.5, 0.5, false},     // exact
        {10.0, 14.0, true},    // abs 4, rel 40 %
        {50.0, 54.0, true},    // abs 4, rel 8 %
        {20.0, 10.0, true},    // abs 10, rel 50 %
        {100.0, 106.0, true},  // abs 6, rel 6 %
    };
    std::vector<std::array<double, 4>> gt_px, est_px;
    for (const auto& c : cases) {
        gt_px.push_back({0, 0, c.gt, 5});
        est_px.push_back({0, 0, c.est, 5});
    }
    const SceneFlowField gt = field_1xn(gt_px), est = field_1xn(est_px);
    const PixelMask valid(1, 10, true);
    const PixelMask d1 = component_outlier_map(est, gt, valid, Component::D1);
    for (int j = 0; j < 10; ++j) EXPECT_EQ(d1(0, j), cases[j].outlier) << "pixel " << j;
    EXPECT_EQ(component_outlier_map(est, gt, valid, Component::D2).count(), 0u);
    EXPECT_EQ(component_outlier_map(est, gt, valid, Component::OF).count(), 0u);
}

TEST(ComponentOutlierMap, FlowUsesEndPointError) {
    // gt flow (60, 80): magnitude 100. est off by (3, 4): EPE 5 = 5 % -> inlier.
    const SceneFlowField gt = field_1xn({{60, 80, 1, 1}, {60, 80, 1, 1}});
    const SceneFlowField est = field_1xn({{63, 84, 1, 1}, {64, 84, 1, 1}});
    const PixelMask of = component_outlier_map(est, gt, PixelMask(1, 2, true), Component::OF);
    EXPECT_FALSE(of(0, 0));
    EXPECT_TRUE(of(0, 1));  // EPE sqrt(16 + 16) = 5.66 > 5
}

TEST(ComponentOutlierMap, InvalidPixelsAreNeverOutliers) {
    const SceneFlowField gt = field_1xn({{0, 0, 1, 1}});
    const SceneFlowField est = field_1xn({{50, 0, 90, 90}});
    EXPECT_EQ(scene_flow_outlier_map(est, gt, PixelMask(1, 1, false)).count(), 0u);
}

TEST(ComponentOutlierMap, SceneFlowComponentIsRejected) {
    const SceneFlowField f(1, 1, Direction::forward);
    EXPECT_THROW(component_outlier_map(f, f, PixelMask(1, 1, true), Component::SF), InvalidArgument);
}

TEST(SceneFlowOutlierMap, EqualsUnionOfComponentsOnRandomFixtures) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> val(-20.0, 20.0), noise(-6.0, 6.0);
    for (int trial = 0; trial < 1000; ++trial) {
        SceneFlowField gt(4, 5, Direction::forward), est(4, 5, Direction::forward);
        PixelMask valid(4, 5, true);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 5; ++j) {
                valid.set(i, j, rng() % 5 != 0);
                for (int c = 0; c < 4; ++c) {
                    gt.at(i, j, c) = val(rng);
                    est.at(i, j, c) = gt.at(i, j, c) + noise(rng);
                }
            }
        const PixelMask sf = scene_flow_outlier_map(est, gt, valid);
        const PixelMask d1 = component_outlier_map(est, gt, valid, Component::D1);
        const PixelMask d2 = component_outlier_map(est, gt, valid, Component::D2);
        const PixelMask of = component_outlier_map(est, gt, valid, Component::OF);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 5; ++j) {
                ASSERT_EQ(sf(i, j), d1(i, j) || d2(i, j) || of(i, j));
                if (!valid(i, j)) continue;
                const double eu = est.at(i, j, 0) - gt.at(i, j, 0), ev = est.at(i, j, 1) - gt.at(i, j, 1);
                ASSERT_EQ(of(i, j), oracle_outlier(std::hypot(eu, ev), std::hypot(gt.at(i, j, 0), gt.at(i, j, 1))));
                ASSERT_EQ(d1(i, j), oracle_outlier(std::abs(est.at(i, j, 2) - gt.at(i, j, 2)), std::abs(gt.at(i, j, 2))));
            }
    }
}

TEST(Evaluate, RatesAndCountsPerRegion) {
    // Pixel 0: SF outlier in noc; pixel 1: inlier in noc; pixel 2: outlier in occ; pixel 3 invalid.
    const SceneFlowField gt = field_1xn({{0, 0, 10, 10}, {0, 0, 10, 10}, {0, 0, 10, 10}, {0, 0, 10, 10}});
    const SceneFlowField est = field_1xn({{9, 0, 10, 10}, {0, 0, 10, 10}, {0, 0, 20, 10}, {50, 0, 0, 0}});
    PixelMask valid(1, 4, true), noc(1, 4, true, MaskKind::noc);
    valid.set(0, 3, false);
    noc.set(0, 2, false);
    const EvalReport r = evaluate(est, gt, valid, noc);
    EXPECT_DOUBLE_EQ(*r.rate(Component::SF, Region::all), 200.0 / 3.0);
    EXPECT_DOUBLE_EQ(*r.rate(Component::SF, Region::noc), 50.0);
    EXPECT_DOUBLE_EQ(*r.rate(Component::SF, Region::occ), 100.0);
    EXPECT_DOUBLE_EQ(*r.rate(Component::OF, Region::occ), 0.0);
    EXPECT_DOUBLE_EQ(*r.rate(Component::D1, Region::occ), 100.0);
    EXPECT_EQ(r.pixel_count(Component::SF, Region::all), 3u);
    EXPECT_EQ(r.pixel_count(Component::D2, Region::occ), 1u);
}

TEST(Evaluate, EmptyRegionHasNoRate) {
    const SceneFlowField f(2, 2, Direction::forward);
    const EvalReport r = evaluate(f, f, PixelMask(2, 2, true), PixelMask(2, 2, true, MaskKind::noc));
    EXPECT_FALSE(r.rate(Component::SF, Region::occ).has_value());
    EXPECT_EQ(*r.rate(Component::SF, Region::all), 0.0);
}

TEST(Evaluate, PerfectEstimateScoresZero) {
    SceneFlowField f(3, 3, Direction::forward);
    for (double& v : f.grid().values()) v = 4.5;
    PixelMask noc(3, 3, true, MaskKind::noc);
    noc.set(1, 1, false);
    const EvalReport r = evaluate(f, f, PixelMask(3, 3, true), noc);
    for (Component c : {Component::D1, Component::D2, Component::OF, Component::SF})
        for (Region g : {Region::all, Region::noc, Region::occ}) EXPECT_EQ(*r.rate(c, g), 0.0);
}

TEST(Aggregate, IsPixelWeighted) {
    EvalReport a, b;
    a.set(Component::SF, Region::all, 10.0, 100);
    b.set(Component::SF, Region::all, 40.0, 300);
    a.set(Component::SF, Region::occ, 50.0, 10);
    b.set(Component::SF, Region::occ, std::nullopt, 0);
    const EvalReport reports[] = {a, b};
    const EvalReport m = aggregate(reports);
    EXPECT_DOUBLE_EQ(*m.rate(Component::SF, Region::all), (10.0 * 100 + 40.0 * 300) / 400.0);
    EXPECT_EQ(m.pixel_count(Component::SF, Region::all), 400u);
    EXPECT_DOUBLE_EQ(*m.rate(Component::SF, Region::occ), 50.0);
    EXPECT_FALSE(m.rate(Component::D1, Region::all).has_value());
}

TEST(EvalReport, TextRoundTripIsExact) {
    EvalReport r;
    r.set(Component::D1, Region::all, 1.0 / 3.0, 12345);
    r.set(Component::OF, Region::noc, 99.99999999999, 7);
    r.set(Component::SF, Region::occ, std::nullopt, 0);
    EXPECT_EQ(EvalReport::parse(r.to_text()), r);
}

TEST(EvalReport, RejectsOutOfRangeRates) {
    EvalReport r;
    EXPECT_THROW(r.set(Component::D1, Region::all, 100.5, 1), InvalidArgument);
    EXPECT_THROW(r.set(Component::D1, Region::all, -0.1, 1), InvalidArgument);
    EXPECT_THROW(EvalReport::parse("D1.all = 120\n"), DataError);
    EXPECT_THROW(EvalReport::parse("D5.all = 1\n"), DataError);
}

TEST(ReconstructOcc, ReproducesPublishedRows) {
    // (all, noc, occ) triples from the published KITTI table.
    struct Row { double all, noc, occ; };
    const Row rows[] = {{8.21, 6.69, 16.37}, {15.69, 10.86, 41.62}};
    for (const auto& r : rows) {
        const OccRateEstimate e = reconstruct_occ_rate(r.all, r.noc);
        EXPECT_NEAR(e.rate, r.occ, 0.01);
        EXPECT_FALSE(e.inconsistent);
    }
}

TEST(ReconstructOcc, AllEqualsNocGivesSameOcc) {
    EXPECT_NEAR(reconstruct_occ_rate(12.5, 12.5).rate, 12.5, 1e-12);
}

TEST(ReconstructOcc, NegativeResultIsFlagged) {
    const OccRateEstimate e = reconstruct_occ_rate(5.0, 10.0);
    EXPECT_TRUE(e.inconsistent);
    EXPECT_LT(e.rate, 0.0);
}

TEST(ReconstructOcc, ResultAboveHundredIsFlagged) {
    // 0.843 * 1 + 0.157 * occ = 20 -> occ = 121.08
    const OccRateEstimate e = reconstruct_occ_rate(20.0, 1.0);
    EXPECT_TRUE(e.inconsistent);
    EXPECT_NEAR(e.rate, (20.0 - 0.843) / 0.157, 1e-9);
    EXPECT_FALSE(reconstruct_occ_rate(8.21, 6.69).inconsistent);
}

TEST(ReconstructOcc, ExactForMeasuredRatio) {
    // A split with 3 of 4 valid pixels non-occluded; occ rate recovered exactly.
    PixelMask valid(1, 4, true), noc(1, 4, true, MaskKind::noc);
    noc.set(0, 3, false);
    const MaskPair pairs[] = {{&valid, &noc}};
    const NocRatio ratio = measure_noc_ratio(pairs);
    EXPECT_DOUBLE_EQ(ratio.value(), 0.75);
    // noc rate 100/3 (1 of 3), occ rate 100 (1 of 1) -> all 50.
    EXPECT_NEAR(reconstruct_occ_rate(50.0, 100.0 / 3.0, ratio).rate, 100.0, 1e-9);
}

TEST(NocRatio, MustLieStrictlyBetweenZeroAndOne) {
    EXPECT_THROW(NocRatio(0.0), InvalidArgument);
    EXPECT_THROW(NocRatio(1.0), InvalidArgument);
    EXPECT_DOUBLE_EQ(NocRatio().value(), 0.843);
}

}  // namespace
}  // namespace dtf
