#pragma once

#include <filesystem>
#include <string>

#include "dtf/fusion.hpp"
#include "dtf/grid.hpp"
#include "dtf/metrics.hpp"
#include "dtf/png_io.hpp"

namespace dtf {

/// RGB error map: green for inliers, magenta for outliers, black where invalid.
Raster8 error_map_image(const PixelMask& outliers, const PixelMask& valid);

/// Optical flow on the standard color wheel (hue = direction, saturation =
/// magnitude / max_magnitude). Non-finite vectors render black.
Raster8 flow_color_image(const SceneFlowField& field, double max_magnitude);

/// Largest finite flow magnitude of a field (0 for an all-zero field).
double max_flow_magnitude(const SceneFlowField& field);

/// Writes the color-wheel rendering, encoding the normalization in the file
/// name: `<stem>_max<magnitude>.png`. Returns the written path.
std::filesystem::path write_flow_image(const std::filesystem::path& dir, const std::string& stem,
                                       const SceneFlowField& field);

/// 8-bit grayscale soft occlusion map: 0 = forward only, 255 = backward only.
Raster8 occlusion_map_image(const Grid2D& occlusion);

}  // namespace dtf
