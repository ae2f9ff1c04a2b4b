#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dtf/grid.hpp"
#include "dtf/metrics.hpp"
#include "dtf/net.hpp"

namespace dtf {

/// basic: one weight pair per pixel from concat(fw, inv).
/// spatial: additionally sees normalized image coordinates.
/// 4ch: one weight pair per scene flow channel.
enum class FusionVariant { basic, spatial, four_channel, spatial_four_channel };

std::string_view to_string(FusionVariant v);
/// Accepts "basic", "spatial", "4ch", "spatial-4ch".
FusionVariant parse_fusion_variant(std::string_view name);

bool is_spatial(FusionVariant v);
/// 1 for basic/spatial, 4 for the per-channel variants.
int weight_channels(FusionVariant v);
int fusion_input_channels(FusionVariant v);
int fusion_logit_channels(FusionVariant v);
/// "dtf-fusion-<variant>-v1"
std::string fusion_architecture(FusionVariant v);

/// Context-network layout: seven 3x3 layers with 32, 64, 128, 128, 64, 32 and
/// 2 (or 8) outputs at dilations 1, 2, 4, 8, 16, 1, 1.
std::vector<ConvLayerSpec> fusion_layer_specs(FusionVariant v);

struct FusionNetwork {
    FusionVariant variant = FusionVariant::basic;
    ConvNet net;
};

FusionNetwork build_fusion(FusionVariant variant, std::uint64_t seed);

/// Convex per-pixel weights over {forward, inverted backward}; one or four channels.
struct FusionWeights {
    Grid2D w_fw;
    Grid2D w_bw;
    int channels() const { return w_fw.channels(); }
};

Grid2D fusion_input(FusionVariant variant, const SceneFlowField& fw, const SceneFlowField& inv);

/// Logit channels come in (forward, backward) pairs: pair c is channels (2c, 2c + 1).
FusionWeights weights_from_logits(const Grid2D& logits);

FusionWeights predict_weights(const FusionNetwork& net, const SceneFlowField& fw, const SceneFlowField& inv);
FusionWeights predict_weights(const FusionNetwork& net, const SceneFlowField& fw, const SceneFlowField& inv,
                              ForwardTape& tape);

/// fused = w_fw * fw + w_bw * inv; single-channel weights broadcast over all four channels.
SceneFlowField weighted_average(const SceneFlowField& fw, const SceneFlowField& inv, const FusionWeights& w);

struct WeightedAverageGrads {
    Grid2D d_fw;         ///< 4 channels
    Grid2D d_inv;        ///< 4 channels
    Grid2D d_logits;     ///< 2 * weight channels, pair layout as weights_from_logits
};

/// Back-propagates dL/d(fused) through weighted_average and the pairwise softmax.
WeightedAverageGrads weighted_average_backward(const SceneFlowField& fw, const SceneFlowField& inv,
                                               const FusionWeights& w, const Grid2D& d_fused);

struct OracleFusion {
    SceneFlowField fused;
    PixelMask selection;  ///< true where the inverted backward estimate was selected
};

/// Ground-truth-guided upper bound. Per valid pixel the whole 4-vector is taken
/// from the candidate with fewer outlier components (D1, D2, OF); ties go to the
/// smaller L1 error, remaining ties to the forward estimate. Invalid pixels keep fw.
OracleFusion oracle_fuse(const SceneFlowField& fw, const SceneFlowField& inv, const SceneFlowField& gt,
                         const PixelMask& valid, const OutlierThresholds& t = {});

/// Soft occlusion map: the backward weight (mean over channels for 4ch variants).
Grid2D occlusion_map(const FusionWeights& w);

}  // namespace dtf
