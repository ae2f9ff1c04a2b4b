#include "dtf/inversion.hpp"

#include <array>

#include "dtf/error.hpp"

namespace dtf {

namespace {

void require_backward(const SceneFlowField& f, const char* who) {
    if (f.direction() != Direction::backward) {
        throw InvalidArgument(std::string(who) + ": expected a backward field");
    }
}

}  // namespace

std::vector<ConvLayerSpec> inverter_layer_specs() {
    return {
        {kInverterInputChannels, 16, 3, 1, Activation::leaky_relu},
        {16, 16, 3, 1, Activation::leaky_relu},
        {16, 16, 3, 1, Activation::leaky_relu},
        {16, 16, 3, 1, Activation::leaky_relu},
        {16, kSceneFlowChannels, 7, 1, Activation::linear},
    };
}

InverterNetwork build_inverter(std::uint64_t seed) { return {ConvNet::initialized(inverter_layer_specs(), seed)}; }

Grid2D inverter_input(const SceneFlowField& backward) {
    const Grid2D coords = normalized_coordinate_grid(backward.height(), backward.width());
    const std::array<const Grid2D*, 2> parts{&backward.grid(), &coords};
    return concat_channels(parts);
}

SceneFlowField invert(const InverterNetwork& inverter, const SceneFlowField& backward) {
    require_backward(backward, "invert");
    return SceneFlowField(inverter.net.forward(inverter_input(backward)), Direction::forward);
}

SceneFlowField invert(const InverterNetwork& inverter, const SceneFlowField& backward, ForwardTape& tape) {
    require_backward(backward, "invert");
    return SceneFlowField(inverter.net.forward(inverter_input(backward), tape), Direction::forward);
}

SceneFlowField constant_linear_invert(const SceneFlowField& backward) {
    require_backward(backward, "constant_linear_invert");
    SceneFlowField out(backward.height(), backward.width(), Direction::forward);
    for (int i = 0; i < backward.height(); ++i) {
        for (int j = 0; j < backward.width(); ++j) {
            const double d0 = backward.at(i, j, kDisp0);
            out.at(i, j, kFlowU) = -backward.at(i, j, kFlowU);
            out.at(i, j, kFlowV) = -backward.at(i, j, kFlowV);
            out.at(i, j, kDisp0) = d0;
            out.at(i, j, kDisp1) = 2.0 * d0 - backward.at(i, j, kDisp1);
        }
    }
    return out;
}

PixelMask nonpositive_disparity_pixels(const SceneFlowField& field) {
    PixelMask m(field.height(), field.width(), false);
    for (int i = 0; i < field.height(); ++i)
        for (int j = 0; j < field.width(); ++j)
            m.set(i, j, !(field.at(i, j, kDisp0) > 0.0) || !(field.at(i, j, kDisp1) > 0.0));
    return m;
}

}  // namespace dtf
