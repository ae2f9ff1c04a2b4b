#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "dtf/data_io.hpp"
#include "dtf/grid.hpp"

namespace dtf {

enum class EstimatorKind { noisy_oracle, external };

/// How the noisy oracle corrupts pixels occluded in the requested direction.
/// Only the temporal channels (u, v, d1) are corrupted; d0 is a stereo
/// quantity at the reference time and keeps the regular noise.
enum class OcclusionCorruption {
    none,
    large_noise,    ///< add N(0, occ_sigma)
    hold_occluder,  ///< take over the occluding surface's motion
};

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::noisy_oracle;
    double sigma_flow = 0.5;  ///< px
    double sigma_disp = 0.3;  ///< px
    /// Spatial correlation length of the regular noise (std of a Gaussian
    /// smoothing kernel, px); 0 gives independent per-pixel noise. The
    /// per-pixel standard deviations stay sigma_flow and sigma_disp.
    double noise_length = 3.0;
    OcclusionCorruption occ_corruption = OcclusionCorruption::large_noise;
    double occ_sigma = 10.0;  ///< px
    std::uint64_t seed = 0;
    /// Root of precomputed fields for EstimatorKind::external.
    std::filesystem::path external_root;

    void validate() const;
    friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;
};

std::string_view to_string(EstimatorKind k);
EstimatorKind parse_estimator_kind(std::string_view s);
std::string_view to_string(OcclusionCorruption c);
OcclusionCorruption parse_occlusion_corruption(std::string_view s);

/// Auxiliary dual-frame estimate of the requested direction at the reference frame.
/// The noisy oracle is deterministic in (config.seed, sample.id, direction).
SceneFlowField estimate(const FrameTripletSample& sample, Direction direction, const EstimatorConfig& config);

/// Precomputed estimate stored in the dataset layout under `root`.
LoadedField load_external_field(const std::filesystem::path& root, std::string_view id, Direction direction);

}  // namespace dtf
