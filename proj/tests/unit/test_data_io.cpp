#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dtf/data_io.hpp"
#include "dtf/error.hpp"
#include "dtf/png_io.hpp"
#include "dtf/synth.hpp"

namespace dtf {
namespace {

namespace fs = std::filesystem;

class DataIo : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("dtf_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

TEST_F(DataIo, DisparityCodecExamples) {
    Grid2D d(1, 3, 1, std::vector<double>{1.0, 7.3, 0.0});
    PixelMask valid(1, 3, true);
    valid.set(0, 2, false);
    write_disparity_png(dir_ / "d.png", d, valid);
    const Raster16 raw = read_png16(dir_ / "d.png");
    EXPECT_EQ(raw.at(0, 0), 256);
    EXPECT_EQ(raw.at(0, 2), 0);
    const DisparityMap back = read_disparity_png(dir_ / "d.png");
    EXPECT_EQ(back.disparity.at(0, 0), 1.0);
    EXPECT_FALSE(back.valid(0, 2));
    EXPECT_LE(std::abs(back.disparity.at(0, 1) - 7.3), 1.0 / 512);
}

TEST_F(DataIo, DisparityCollidingWithInvalidIsRejected) {
    EXPECT_THROW(write_disparity_png(dir_ / "d.png", Grid2D(1, 1, 1, 0.001), PixelMask(1, 1, true)), DataError);
    EXPECT_THROW(write_disparity_png(dir_ / "d.png", Grid2D(1, 1, 1, 300.0), PixelMask(1, 1, true)), DataError);
}

TEST_F(DataIo, FlowCodecExamples) {
    Grid2D f(1, 2, 2, std::vector<double>{0.0, -2.5, 99.0, 1.0});
    PixelMask valid(1, 2, true);
    valid.set(0, 1, false);
    write_flow_png(dir_ / "f.png", f, valid);
    const Raster16 raw = read_png16(dir_ / "f.png");
    EXPECT_EQ(raw.at(0, 0, 0), 32768);
    EXPECT_EQ(raw.at(0, 0, 1), 32608);
    EXPECT_EQ(raw.at(0, 0, 2), 1);
    EXPECT_EQ(raw.at(0, 1, 2), 0);
    const FlowMap back = read_flow_png(dir_ / "f.png");
    EXPECT_EQ(back.flow.at(0, 0, 0), 0.0);
    EXPECT_EQ(back.flow.at(0, 0, 1), -2.5);
    EXPECT_TRUE(back.valid(0, 0));
    EXPECT_FALSE(back.valid(0, 1));
}

TEST_F(DataIo, FlowOverflowIsRejected) {
    EXPECT_THROW(write_flow_png(dir_ / "f.png", Grid2D(1, 1, 2, 600.0), PixelMask(1, 1, true)), DataError);
}

TEST_F(DataIo, MalformedFilesAreRejected) {
    Raster8 eight(2, 2, 1);
    write_png(dir_ / "e.png", eight);
    EXPECT_THROW(read_disparity_png(dir_ / "e.png"), DataError);
    Raster16 gray(2, 2, 1);
    write_png(dir_ / "g.png", gray);
    EXPECT_THROW(read_flow_png(dir_ / "g.png"), DataError);
    Raster16 flags(1, 1, 3);
    flags.at(0, 0, 2) = 7;
    write_png(dir_ / "m.png", flags);
    EXPECT_THROW(read_flow_png(dir_ / "m.png"), DataError);
    EXPECT_THROW(read_png16(dir_ / "missing.png"), DataError);
}

TEST_F(DataIo, RandomRoundTripWithinHalfStep) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> flow(-500.0, 500.0), disp(0.01, 250.0);
    Grid2D f(100, 100, 2), d(100, 100, 1);
    for (double& v : f.values()) v = flow(rng);
    for (double& v : d.values()) v = disp(rng);
    const PixelMask valid(100, 100, true);
    write_flow_png(dir_ / "f.png", f, valid);
    write_disparity_png(dir_ / "d.png", d, valid);
    const FlowMap fb = read_flow_png(dir_ / "f.png");
    const DisparityMap db = read_disparity_png(dir_ / "d.png");
    for (std::size_t k = 0; k < f.size(); ++k) ASSERT_LE(std::abs(fb.flow.values()[k] - f.values()[k]), 1.0 / 128);
    for (std::size_t k = 0; k < d.size(); ++k) ASSERT_LE(std::abs(db.disparity.values()[k] - d.values()[k]), 1.0 / 512);
}

TEST_F(DataIo, SampleRoundTripWithinQuantization) {
    const FrameTripletSample s = generate_sample(sample_scene(scene_preset("traffic"), 4), "000007");
    write_sample(dir_, s);
    const FrameTripletSample back = read_sample(dir_, s.id);
    ASSERT_TRUE(back.has_backward());
    for (Direction dir : {Direction::forward, Direction::backward})
        for (std::size_t k = 0; k < s.gt(dir).grid().size(); ++k) {
            const double tol = k % 4 < 2 ? 1.0 / 128 : 1.0 / 512;
            ASSERT_LE(std::abs(back.gt(dir).grid().values()[k] - s.gt(dir).grid().values()[k]), tol);
        }
    EXPECT_EQ(back.noc_fw, s.noc_fw);
    EXPECT_EQ(back.noc_bw, s.noc_bw);
    EXPECT_EQ(back.valid_fw.count(), s.valid_fw.count());
    for (std::size_t k = 0; k < s.images[0].size(); ++k)
        ASSERT_LE(std::abs(back.images[0].values()[k] - s.images[0].values()[k]), 0.5 / 255 + 1e-12);
}

TEST_F(DataIo, ManifestListsSamplesInOrder) {
    DatasetManifest m;
    m.root = dir_;
    m.split = "val";
    for (int k : {2, 0, 1}) {
        const std::string id = "s" + std::to_string(k);
        write_sample(dir_, generate_sample(sample_scene(scene_preset("static"), std::uint64_t(k)), id));
        m.ids.push_back(id);
    }
    write_manifest(dir_ / "manifest.txt", m);
    const DatasetManifest loaded = load_manifest(dir_ / "manifest.txt");
    EXPECT_EQ(loaded.ids, m.ids);
    EXPECT_EQ(loaded.split, "val");
    SampleStream stream = iterate_samples(loaded);
    std::vector<std::string> seen;
    while (auto s = stream.next()) seen.push_back(s->id);
    EXPECT_EQ(seen, m.ids);
}

TEST_F(DataIo, EmptyManifestGivesEmptyStream) {
    DatasetManifest m;
    write_manifest(dir_ / "manifest.txt", m);
    SampleStream stream = iterate_samples(load_manifest(dir_ / "manifest.txt"));
    EXPECT_FALSE(stream.next().has_value());
}

TEST_F(DataIo, MissingMandatoryFileNamesSample) {
    const FrameTripletSample s = generate_sample(sample_scene(scene_preset("static"), 1), "abc123");
    write_sample(dir_, s);
    DatasetManifest m;
    m.ids = {s.id};
    write_manifest(dir_ / "manifest.txt", m);
    fs::remove(disp0_path(dir_, s.id));
    try {
        load_manifest(dir_ / "manifest.txt");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("abc123"), std::string::npos);
    }
}

TEST_F(DataIo, MissingBackwardGroundTruthIsOptional) {
    FrameTripletSample s = generate_sample(sample_scene(scene_preset("static"), 1), "fwonly");
    s.gt_backward.reset();
    write_sample(dir_, s);
    const FrameTripletSample back = read_sample(dir_, s.id);
    EXPECT_FALSE(back.has_backward());
}

}  // namespace
}  // namespace dtf
