#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "dtf/grid.hpp"
#include "dtf/net.hpp"

namespace dtf {

inline constexpr std::string_view kInverterArchitecture = "dtf-inverter-v1";

/// Input channels of the inverter: four scene flow channels plus normalized x, y.
inline constexpr int kInverterInputChannels = 6;

/// Five 3x3/7x7 layers (16, 16, 16, 16, 4 outputs), leaky ReLU except the linear head.
std::vector<ConvLayerSpec> inverter_layer_specs();

/// Learned temporal inverter: maps a backward field (t -> t-1) to a forward
/// field (t -> t+1) at the same reference frame.
struct InverterNetwork {
    ConvNet net;
};

InverterNetwork build_inverter(std::uint64_t seed);

/// Network input for a backward field: (u, v, d0, d1, x_norm, y_norm).
Grid2D inverter_input(const SceneFlowField& backward);

SceneFlowField invert(const InverterNetwork& inverter, const SceneFlowField& backward);
SceneFlowField invert(const InverterNetwork& inverter, const SceneFlowField& backward, ForwardTape& tape);

/// Constant-motion baseline: negates optical flow and the disparity change.
/// (u, v, d0, d1) -> (-u, -v, d0, 2 d0 - d1). The result is not clamped.
SceneFlowField constant_linear_invert(const SceneFlowField& backward);

/// Pixels whose d0 or d1 is not strictly positive.
PixelMask nonpositive_disparity_pixels(const SceneFlowField& field);

}  // namespace dtf
