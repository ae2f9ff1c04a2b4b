#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dtf/checkpoint.hpp"
#include "dtf/error.hpp"
#include "dtf/net.hpp"

namespace dtf {
namespace {

Grid2D random_grid(int h, int w, int c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    Grid2D g(h, w, c);
    for (double& v : g.values()) v = u(rng);
    return g;
}

// Direct nested-loop convolution used as the reference.
Grid2D naive_conv(const Grid2D& x, const ConvLayerSpec& s, const LayerParams& p) {
    Grid2D y(x.height(), x.width(), s.out_channels);
    const int r = s.kernel / 2;
    for (int i = 0; i < x.height(); ++i)
        for (int j = 0; j < x.width(); ++j)
            for (int o = 0; o < s.out_channels; ++o) {
                double acc = p.bias(o);
                for (int ky = 0; ky < s.kernel; ++ky)
                    for (int kx = 0; kx < s.kernel; ++kx) {
                        const int yi = i + (ky - r) * s.dilation, xj = j + (kx - r) * s.dilation;
                        if (yi < 0 || yi >= x.height() || xj < 0 || xj >= x.width()) continue;
                        for (int c = 0; c < s.in_channels; ++c)
                            acc += p.weights(o, (ky * s.kernel + kx) * s.in_channels + c) * x.at(yi, xj, c);
                    }
                y.at(i, j, o) = s.activation == Activation::leaky_relu ? leaky_relu(acc) : acc;
            }
    return y;
}

TEST(ConvLayerSpec, ReceptiveFieldAndValidation) {
    EXPECT_EQ((ConvLayerSpec{1, 1, 3, 16}).receptive_field(), 33);
    EXPECT_EQ((ConvLayerSpec{2, 4, 7, 1}).parameter_count(), 4u * 49 * 2 + 4);
    EXPECT_THROW((ConvLayerSpec{1, 1, 4, 1}).validate(), InvalidArgument);
    EXPECT_THROW((ConvLayerSpec{1, 1, 3, 0}).validate(), InvalidArgument);
    EXPECT_THROW((ConvLayerSpec{0, 1, 3, 1}).validate(), InvalidArgument);
}

TEST(Conv2d, MatchesNestedLoopReference) {
    const ConvLayerSpec specs[] = {
        {3, 5, 3, 1, Activation::leaky_relu},
        {2, 4, 3, 4, Activation::linear},
        {4, 2, 7, 1, Activation::leaky_relu},
        {3, 3, 1, 1, Activation::linear},
        {1, 2, 5, 3, Activation::leaky_relu},
    };
    std::uint64_t seed = 1;
    for (const auto& s : specs) {
        const ConvNet net = ConvNet::initialized({s}, seed++);
        const Grid2D x = random_grid(7, 9, s.in_channels, seed++);
        const Grid2D fast = conv2d_forward(x, s, net.params()[0]);
        const Grid2D ref = naive_conv(x, s, net.params()[0]);
        for (std::size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(fast.values()[k], ref.values()[k], 1e-12);
    }
}

TEST(Conv2d, SinglePixelWithLargeDilationSeesOnlyCenterTap) {
    const ConvLayerSpec s{1, 1, 3, 16, Activation::linear};
    LayerParams p{Eigen::MatrixXd::Ones(1, 9), Eigen::VectorXd::Zero(1)};
    Grid2D x(1, 1, 1, 2.5);
    EXPECT_DOUBLE_EQ(conv2d_forward(x, s, p).at(0, 0), 2.5);
}

TEST(Conv2d, ZeroWeightsGiveBias) {
    const ConvLayerSpec s{2, 3, 3, 2, Activation::linear};
    LayerParams p{Eigen::MatrixXd::Zero(3, 18), Eigen::Vector3d(1.0, -2.0, 0.5)};
    const Grid2D y = conv2d_forward(random_grid(4, 5, 2, 3), s, p);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            EXPECT_EQ(y.at(i, j, 0), 1.0);
            EXPECT_EQ(y.at(i, j, 1), -2.0);
            EXPECT_EQ(y.at(i, j, 2), 0.5);
        }
}

TEST(LeakyRelu, SlopeIsOneTenth) {
    EXPECT_EQ(leaky_relu(2.0), 2.0);
    EXPECT_DOUBLE_EQ(leaky_relu(-2.0), -0.2);
    EXPECT_EQ(leaky_relu(0.0), 0.0);
}

TEST(PairwiseSoftmax, SumsToOneAndIsStable) {
    Grid2D a(1, 4, 1, std::vector<double>{0.0, 1000.0, -1000.0, 3.0});
    Grid2D b(1, 4, 1, std::vector<double>{0.0, -1000.0, 1000.0, 1.0});
    const auto [wa, wb] = pairwise_softmax(a, b);
    EXPECT_DOUBLE_EQ(wa.at(0, 0), 0.5);
    EXPECT_EQ(wa.at(0, 1), 1.0);
    EXPECT_EQ(wb.at(0, 2), 1.0);
    EXPECT_NEAR(wa.at(0, 3), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
    for (int j = 0; j < 4; ++j) {
        EXPECT_TRUE(std::isfinite(wa.at(0, j)));
        EXPECT_NEAR(wa.at(0, j) + wb.at(0, j), 1.0, 1e-15);
    }
}

TEST(ConvNet, InitializationIsSeededAndBounded) {
    const std::vector<ConvLayerSpec> specs{{3, 8, 3, 1}, {8, 2, 3, 2, Activation::linear}};
    const ConvNet a = ConvNet::initialized(specs, 42), b = ConvNet::initialized(specs, 42),
                  c = ConvNet::initialized(specs, 43);
    EXPECT_EQ(flatten(a.params()), flatten(b.params()));
    EXPECT_NE(flatten(a.params()), flatten(c.params()));
    const double bound = 1.0 / std::sqrt(27.0);
    EXPECT_LE(a.params()[0].weights.cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(a.params()[0].bias.norm(), 0.0);
}

TEST(ConvNet, RejectsChainedChannelMismatch) {
    EXPECT_THROW(ConvNet({{3, 8, 3, 1}, {4, 2, 3, 1}}), ShapeError);
}

TEST(ConvNet, FlattenUnflattenRoundTrip) {
    ConvNet net = ConvNet::initialized({{2, 3, 3, 1}, {3, 1, 1, 1}}, 5);
    std::vector<double> flat = flatten(net.params());
    EXPECT_EQ(flat.size(), net.parameter_count());
    for (double& v : flat) v *= 2.0;
    unflatten(flat, net.params());
    EXPECT_EQ(flatten(net.params()), flat);
    EXPECT_THROW(unflatten(std::vector<double>(3), net.params()), ShapeError);
}

TEST(ConvNet, ForwardWithTapeMatchesPlainForward) {
    const ConvNet net = ConvNet::initialized({{2, 4, 3, 1}, {4, 4, 3, 2}, {4, 1, 3, 1, Activation::linear}}, 9);
    const Grid2D x = random_grid(6, 5, 2, 10);
    ForwardTape tape;
    EXPECT_EQ(net.forward(x), net.forward(x, tape));
    EXPECT_EQ(tape.outputs.size(), 3u);
}

TEST(GradientCheck, SmallNetworkMatchesFiniteDifferences) {
    const ConvNet net = ConvNet::initialized(
        {{2, 3, 3, 1}, {3, 3, 3, 2}, {3, 3, 1, 1}, {3, 2, 3, 1, Activation::linear}}, 11);
    const Grid2D x = random_grid(5, 6, 2, 12);
    const Grid2D target = random_grid(5, 6, 2, 13);
    const auto objective = network_objective(net, x, squared_loss(target));
    const auto report = gradient_check(objective, network_point(net, x));
    EXPECT_LT(report.max_rel_error, 1e-5) << "worst coordinate " << report.worst_coordinate;
    EXPECT_EQ(report.coordinates_checked, net.parameter_count() + x.size());
}

TEST(GradientCheck, DetectsWrongGradient) {
    const Objective bad = [](std::span<const double> x, std::span<double> g) {
        if (!g.empty()) g[0] = 3.0 * x[0];  // true derivative of x^2 is 2x
        return x[0] * x[0];
    };
    const double x0[] = {1.5};
    EXPECT_GT(gradient_check(bad, x0).max_rel_error, 0.1);
}

TEST(GradientCheck, RelativeErrorFloor) {
    EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(1e-12, 0.0, 1e-8), 1e-4);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const ConvNet net = ConvNet::initialized({{6, 16, 3, 1}, {16, 4, 7, 1, Activation::linear}}, 21);
    const std::string bytes = encode_checkpoint("tag-v1", net);
    const Checkpoint back = decode_checkpoint(bytes);
    EXPECT_EQ(back.architecture, "tag-v1");
    EXPECT_EQ(back.net.specs(), net.specs());
    EXPECT_EQ(flatten(back.net.params()), flatten(net.params()));
    EXPECT_EQ(encode_checkpoint("tag-v1", back.net), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
    const ConvNet net = ConvNet::initialized({{1, 2, 3, 1}}, 1);
    std::string bytes = encode_checkpoint("x", net);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), DataError);
    EXPECT_THROW(decode_checkpoint(bytes + "x"), DataError);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad_magic), DataError);
    std::string bad_version = bytes;
    bad_version[8] = 9;
    EXPECT_THROW(decode_checkpoint(bad_version), DataError);
}

TEST(Checkpoint, TagMismatchIsReported) {
    const auto path = std::filesystem::temp_directory_path() / "dtf_test_tag.ckpt";
    save_checkpoint(path, "dtf-fusion-basic-v1", ConvNet::initialized({{1, 2, 3, 1}}, 1));
    EXPECT_NO_THROW(load_checkpoint_as(path, "dtf-fusion-basic-v1"));
    EXPECT_THROW(load_checkpoint_as(path, "dtf-fusion-4ch-v1"), DataError);
    std::filesystem::remove(path);
}

}  // namespace
}  // namespace dtf
