#include "dtf/fusion.hpp"

#include <array>
#include <cmath>

#include "dtf/error.hpp"

namespace dtf {

std::string_view to_string(FusionVariant v) {
    switch (v) {
        case FusionVariant::basic: return "basic";
        case FusionVariant::spatial: return "spatial";
        case FusionVariant::four_channel: return "4ch";
        case FusionVariant::spatial_four_channel: return "spatial-4ch";
    }
    return "?";
}

FusionVariant parse_fusion_variant(std::string_view name) {
    for (FusionVariant v : {FusionVariant::basic, FusionVariant::spatial, FusionVariant::four_channel,
                            FusionVariant::spatial_four_channel}) {
        if (name == to_string(v)) return v;
    }
    throw InvalidArgument("unknown fusion variant '" + std::string(name) + "'");
}

bool is_spatial(FusionVariant v) {
    return v == FusionVariant::spatial || v == FusionVariant::spatial_four_channel;
}

int weight_channels(FusionVariant v) {
    return v == FusionVariant::four_channel || v == FusionVariant::spatial_four_channel ? kSceneFlowChannels : 1;
}

int fusion_input_channels(FusionVariant v) { return 2 * kSceneFlowChannels + (is_spatial(v) ? 2 : 0); }

int fusion_logit_channels(FusionVariant v) { return 2 * weight_channels(v); }

std::string fusion_architecture(FusionVariant v) { return "dtf-fusion-" + std::string(to_string(v)) + "-v1"; }

std::vector<ConvLayerSpec> fusion_layer_specs(FusionVariant v) {
    constexpr std::array<int, 6> widths{32, 64, 128, 128, 64, 32};
    constexpr std::array<int, 7> dilations{1, 2, 4, 8, 16, 1, 1};
    std::vector<ConvLayerSpec> specs;
    int in = fusion_input_channels(v);
    for (std::size_t l = 0; l < widths.size(); ++l) {
        specs.push_back({in, widths[l], 3, dilations[l], Activation::leaky_relu});
        in = widths[l];
    }
    specs.push_back({in, fusion_logit_channels(v), 3, dilations[6], Activation::linear});
    return specs;
}

FusionNetwork build_fusion(FusionVariant variant, std::uint64_t seed) {
    return {variant, ConvNet::initialized(fusion_layer_specs(variant), seed)};
}

Grid2D fusion_input(FusionVariant variant, const SceneFlowField& fw, const SceneFlowField& inv) {
    if (!fw.same_extent(inv)) throw ShapeError("fusion: forward and inverted fields differ in extent");
    if (fw.direction() != Direction::forward || inv.direction() != Direction::forward) {
        throw InvalidArgument("fusion: both candidates must be forward fields");
    }
    if (is_spatial(variant)) {
        const Grid2D coords = normalized_coordinate_grid(fw.height(), fw.width());
        const std::array<const Grid2D*, 3> parts{&fw.grid(), &inv.grid(), &coords};
        return concat_channels(parts);
    }
    const std::array<const Grid2D*, 2> parts{&fw.grid(), &inv.grid()};
    return concat_channels(parts);
}

FusionWeights weights_from_logits(const Grid2D& logits) {
    if (logits.channels() % 2 != 0) throw ShapeError("fusion logits must come in pairs");
    const int wc = logits.channels() / 2;
    Grid2D a(logits.height(), logits.width(), wc), b(logits.height(), logits.width(), wc);
    for (std::size_t p = 0; p < logits.pixels(); ++p) {
        for (int c = 0; c < wc; ++c) {
            a.values()[p * wc + c] = logits.values()[p * logits.channels() + 2 * c];
            b.values()[p * wc + c] = logits.values()[p * logits.channels() + 2 * c + 1];
        }
    }
    auto [wa, wb] = pairwise_softmax(a, b);
    return {std::move(wa), std::move(wb)};
}

FusionWeights predict_weights(const FusionNetwork& net, const SceneFlowField& fw, const SceneFlowField& inv) {
    return weights_from_logits(net.net.forward(fusion_input(net.variant, fw, inv)));
}

FusionWeights predict_weights(const FusionNetwork& net, const SceneFlowField& fw, const SceneFlowField& inv,
                              ForwardTape& tape) {
    return weights_from_logits(net.net.forward(fusion_input(net.variant, fw, inv), tape));
}

namespace {

void check_weights(const SceneFlowField& fw, const SceneFlowField& inv, const FusionWeights& w) {
    if (!fw.same_extent(inv)) throw ShapeError("weighted_average: candidate extents differ");
    if (!w.w_fw.same_shape(w.w_bw) || !w.w_fw.same_extent(fw.grid())) {
        throw ShapeError("weighted_average: weight grid shape mismatch");
    }
    if (w.channels() != 1 && w.channels() != kSceneFlowChannels) {
        throw ShapeError("weighted_average: weights need 1 or 4 channels");
    }
    for (std::size_t k = 0; k < w.w_fw.size(); ++k) {
        if (!(std::abs(w.w_fw.values()[k] + w.w_bw.values()[k] - 1.0) <= 1e-6)) {
            throw InvalidArgument("weighted_average: fusion weights do not sum to one");
        }
    }
}

}  // namespace

SceneFlowField weighted_average(const SceneFlowField& fw, const SceneFlowField& inv, const FusionWeights& w) {
    check_weights(fw, inv, w);
    SceneFlowField out(fw.height(), fw.width(), Direction::forward);
    const int wc = w.channels();
    for (std::size_t p = 0; p < fw.grid().pixels(); ++p) {
        for (int c = 0; c < kSceneFlowChannels; ++c) {
            const std::size_t wi = p * wc + (wc == 1 ? 0 : c);
            const std::size_t k = p * kSceneFlowChannels + c;
            out.grid().values()[k] =
                w.w_fw.values()[wi] * fw.grid().values()[k] + w.w_bw.values()[wi] * inv.grid().values()[k];
        }
    }
    return out;
}

WeightedAverageGrads weighted_average_backward(const SceneFlowField& fw, const SceneFlowField& inv,
                                               const FusionWeights& w, const Grid2D& d_fused) {
    check_weights(fw, inv, w);
    if (!d_fused.same_shape(fw.grid())) throw ShapeError("weighted_average_backward: gradient shape mismatch");
    const int wc = w.channels();
    const int H = fw.height(), W = fw.width();
    WeightedAverageGrads g{Grid2D(H, W, kSceneFlowChannels), Grid2D(H, W, kSceneFlowChannels),
                           Grid2D(H, W, 2 * wc)};
    for (std::size_t p = 0; p < fw.grid().pixels(); ++p) {
        std::array<double, kSceneFlowChannels> g_wfw{}, g_wbw{};
        for (int c = 0; c < kSceneFlowChannels; ++c) {
            const int wcix = wc == 1 ? 0 : c;
            const std::size_t wi = p * wc + wcix;
            const std::size_t k = p * kSceneFlowChannels + c;
            const double gf = d_fused.values()[k];
            g.d_fw.values()[k] = w.w_fw.values()[wi] * gf;
            g.d_inv.values()[k] = w.w_bw.values()[wi] * gf;
            g_wfw[wcix] += gf * fw.grid().values()[k];
            g_wbw[wcix] += gf * inv.grid().values()[k];
        }
        for (int c = 0; c < wc; ++c) {
            const double wa = w.w_fw.values()[p * wc + c];
            const double wb = w.w_bw.values()[p * wc + c];
            const double da = (g_wfw[c] - g_wbw[c]) * wa * wb;
            g.d_logits.values()[p * 2 * wc + 2 * c] = da;
            g.d_logits.values()[p * 2 * wc + 2 * c + 1] = -da;
        }
    }
    return g;
}

OracleFusion oracle_fuse(const SceneFlowField& fw, const SceneFlowField& inv, const SceneFlowField& gt,
                         const PixelMask& valid, const OutlierThresholds& t) {
    if (!fw.same_extent(inv) || !fw.same_extent(gt) || !valid.same_extent(gt.grid())) {
        throw ShapeError("oracle_fuse: shape mismatch");
    }
    std::array<PixelMask, 3> fw_out, inv_out;
    const std::array<Component, 3> comps{Component::D1, Component::D2, Component::OF};
    for (int k = 0; k < 3; ++k) {
        fw_out[k] = component_outlier_map(fw, gt, valid, comps[k], t);
        inv_out[k] = component_outlier_map(inv, gt, valid, comps[k], t);
    }

    OracleFusion result{fw, PixelMask(gt.height(), gt.width(), false)};
    for (int i = 0; i < gt.height(); ++i) {
        for (int j = 0; j < gt.width(); ++j) {
            if (!valid(i, j)) continue;
            int n_fw = 0, n_inv = 0;
            for (int k = 0; k < 3; ++k) {
                n_fw += fw_out[k](i, j) ? 1 : 0;
                n_inv += inv_out[k](i, j) ? 1 : 0;
            }
            bool take_inv = n_inv < n_fw;
            if (n_inv == n_fw) {
                double l1_fw = 0.0, l1_inv = 0.0;
                for (int c = 0; c < kSceneFlowChannels; ++c) {
                    l1_fw += std::abs(fw.at(i, j, c) - gt.at(i, j, c));
                    l1_inv += std::abs(inv.at(i, j, c) - gt.at(i, j, c));
                }
                take_inv = l1_inv < l1_fw;
            }
            if (take_inv) {
                for (int c = 0; c < kSceneFlowChannels; ++c) result.fused.at(i, j, c) = inv.at(i, j, c);
                result.selection.set(i, j, true);
            }
        }
    }
    return result;
}

Grid2D occlusion_map(const FusionWeights& w) {
    Grid2D out(w.w_bw.height(), w.w_bw.width(), 1);
    const int wc = w.channels();
    for (std::size_t p = 0; p < out.pixels(); ++p) {
        double s = 0.0;
        for (int c = 0; c < wc; ++c) s += w.w_bw.values()[p * wc + c];
        out.values()[p] = s / wc;
    }
    return out;
}

}  // namespace dtf
