#include "dtf/estimator.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <vector>

#include "dtf/error.hpp"

namespace dtf {

namespace {

std::uint64_t fnv1a(std::uint64_t h, std::string_view bytes) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::uint64_t noise_seed(std::uint64_t seed, std::string_view id, Direction d) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (int k = 0; k < 8; ++k) {
        const char byte = char((seed >> (8 * k)) & 0xff);
        h = fnv1a(h, std::string_view(&byte, 1));
    }
    h = fnv1a(h, id);
    return fnv1a(h, d == Direction::forward ? "fw" : "bw");
}

// Reference pixel whose surface covers the target location of occluded pixel p,
// found through a z-buffer of the non-occluded pixels' target positions.
std::vector<long> find_occluders(const SceneFlowField& gt, const PixelMask& visible, const PixelMask& occ) {
    const int H = gt.height(), W = gt.width();
    std::vector<long> zbuf(std::size_t(H) * W, -1);
    auto target = [&](int i, int j) -> long {
        const long ti = std::lround(i + gt.at(i, j, kFlowV));
        const long tj = std::lround(j + gt.at(i, j, kFlowU));
        if (ti < 0 || ti >= H || tj < 0 || tj >= W) return -1;
        return ti * W + tj;
    };
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            if (!visible(i, j)) continue;
            const long t = target(i, j);
            if (t < 0) continue;
            long& slot = zbuf[std::size_t(t)];
            if (slot < 0 || gt.at(i, j, kDisp1) > gt.grid().values()[std::size_t(slot) * kSceneFlowChannels + kDisp1]) {
                slot = long(i) * W + j;
            }
        }
    }

    // Nearest visible pixel (4-connected BFS) as a fallback for out-of-view targets.
    std::vector<long> nearest(std::size_t(H) * W, -1);
    std::deque<long> queue;
    for (long p = 0; p < long(H) * W; ++p) {
        if (visible.at_index(std::size_t(p))) {
            nearest[std::size_t(p)] = p;
            queue.push_back(p);
        }
    }
    while (!queue.empty()) {
        const long p = queue.front();
        queue.pop_front();
        const int i = int(p / W), j = int(p % W);
        const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int ni = i + di[k], nj = j + dj[k];
            if (ni < 0 || ni >= H || nj < 0 || nj >= W) continue;
            const long q = long(ni) * W + nj;
            if (nearest[std::size_t(q)] >= 0) continue;
            nearest[std::size_t(q)] = nearest[std::size_t(p)];
            queue.push_back(q);
        }
    }

    std::vector<long> occluder(std::size_t(H) * W, -1);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            if (!occ(i, j)) continue;
            const long t = target(i, j);
            const long hit = t >= 0 ? zbuf[std::size_t(t)] : -1;
            occluder[std::size_t(i) * W + j] = hit >= 0 ? hit : nearest[std::size_t(i) * W + j];
        }
    }
    return occluder;
}

/// Four channels of zero-mean, unit-variance Gaussian noise. With a positive
/// correlation length the white field is smoothed by a Gaussian of that
/// standard deviation whose taps have unit energy, so the per-pixel variance
/// stays one. The white field extends past the border so every pixel sees the
/// full kernel.
Grid2D unit_noise(int H, int W, double length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    constexpr int C = kSceneFlowChannels;
    if (length <= 0.0) {
        Grid2D out(H, W, C);
        for (double& v : out.values()) v = unit(rng);
        return out;
    }

    const int R = int(std::ceil(3.0 * length));
    std::vector<double> taps(std::size_t(2 * R + 1));
    double energy = 0.0;
    for (int k = -R; k <= R; ++k) {
        taps[std::size_t(k + R)] = std::exp(-0.5 * k * k / (length * length));
        energy += taps[std::size_t(k + R)] * taps[std::size_t(k + R)];
    }
    for (double& t : taps) t /= std::sqrt(energy);

    const int PH = H + 2 * R, PW = W + 2 * R;
    Grid2D white(PH, PW, C);
    for (double& v : white.values()) v = unit(rng);
    Grid2D rows(PH, W, C);  // horizontal pass
    for (int i = 0; i < PH; ++i)
        for (int j = 0; j < W; ++j)
            for (int k = 0; k <= 2 * R; ++k)
                for (int c = 0; c < C; ++c) rows.at(i, j, c) += taps[std::size_t(k)] * white.at(i, j + k, c);
    Grid2D out(H, W, C);  // vertical pass
    for (int i = 0; i < H; ++i)
        for (int k = 0; k <= 2 * R; ++k)
            for (int j = 0; j < W; ++j)
                for (int c = 0; c < C; ++c) out.at(i, j, c) += taps[std::size_t(k)] * rows.at(i + k, j, c);
    return out;
}

}  // namespace

void EstimatorConfig::validate() const {
    if (!(sigma_flow >= 0.0) || !(sigma_disp >= 0.0) || !(occ_sigma >= 0.0) || !(noise_length >= 0.0)) {
        throw InvalidArgument("estimator: noise levels must be non-negative");
    }
}

std::string_view to_string(EstimatorKind k) { return k == EstimatorKind::noisy_oracle ? "noisy_oracle" : "external"; }

EstimatorKind parse_estimator_kind(std::string_view s) {
    if (s == "noisy_oracle") return EstimatorKind::noisy_oracle;
    if (s == "external") return EstimatorKind::external;
    throw InvalidArgument("unsupported estimator kind '" + std::string(s) + "'");
}

std::string_view to_string(OcclusionCorruption c) {
    switch (c) {
        case OcclusionCorruption::none: return "none";
        case OcclusionCorruption::large_noise: return "large_noise";
        case OcclusionCorruption::hold_occluder: return "hold_occluder";
    }
    return "?";
}

OcclusionCorruption parse_occlusion_corruption(std::string_view s) {
    for (auto c : {OcclusionCorruption::none, OcclusionCorruption::large_noise, OcclusionCorruption::hold_occluder}) {
        if (s == to_string(c)) return c;
    }
    throw InvalidArgument("unknown occlusion corruption '" + std::string(s) + "'");
}

SceneFlowField estimate(const FrameTripletSample& sample, Direction direction, const EstimatorConfig& config) {
    config.validate();
    if (config.kind == EstimatorKind::external) {
        if (config.external_root.empty()) throw InvalidArgument("external estimator needs a root directory");
        LoadedField ext = load_external_field(config.external_root, sample.id, direction);
        if (!ext.field.same_extent(sample.gt_forward)) {
            throw DataError("sample " + sample.id + ": external estimate has the wrong size");
        }
        // Invalid external pixels carry no estimate.
        for (int i = 0; i < ext.field.height(); ++i)
            for (int j = 0; j < ext.field.width(); ++j)
                if (!ext.valid(i, j))
                    for (int c = 0; c < kSceneFlowChannels; ++c)
                        ext.field.at(i, j, c) = std::numeric_limits<double>::quiet_NaN();
        return std::move(ext.field);
    }
    if (config.kind != EstimatorKind::noisy_oracle) throw InvalidArgument("unsupported estimator kind");

    const SceneFlowField& gt = sample.gt(direction);
    const PixelMask& valid = sample.valid(direction);
    const PixelMask noc = mask_and(valid, sample.noc(direction));
    const PixelMask occ = derive_occ_mask(valid, sample.noc(direction));

    SceneFlowField out(gt.grid(), direction);
    const Grid2D noise = unit_noise(gt.height(), gt.width(), config.noise_length,
                                    noise_seed(config.seed, sample.id, direction));
    const double sigma[kSceneFlowChannels] = {config.sigma_flow, config.sigma_flow, config.sigma_disp, config.sigma_disp};
    const std::size_t n = gt.grid().pixels();
    for (std::size_t p = 0; p < n; ++p) {
        double* v = out.grid().data() + p * kSceneFlowChannels;
        const double* z = noise.data() + p * kSceneFlowChannels;
        for (int c = 0; c < kSceneFlowChannels; ++c) v[c] += sigma[c] * z[c];
    }
    std::normal_distribution<double> unit(0.0, 1.0);

    switch (config.occ_corruption) {
        case OcclusionCorruption::none: break;
        case OcclusionCorruption::large_noise: {
            // Separate stream so non-occluded pixels do not depend on the mask.
            std::mt19937_64 occ_rng(noise_seed(config.seed ^ 0x5DEECE66Dull, sample.id, direction));
            for (std::size_t p = 0; p < n; ++p) {
                const double nu = unit(occ_rng), nv = unit(occ_rng), nd = unit(occ_rng);
                if (!occ.at_index(p)) continue;
                double* v = out.grid().data() + p * kSceneFlowChannels;
                v[kFlowU] += config.occ_sigma * nu;
                v[kFlowV] += config.occ_sigma * nv;
                v[kDisp1] += config.occ_sigma * nd;
            }
            break;
        }
        case OcclusionCorruption::hold_occluder: {
            const std::vector<long> occluder = find_occluders(gt, noc, occ);
            const SceneFlowField noisy = out;
            for (std::size_t p = 0; p < n; ++p) {
                const long src = occluder[p];
                if (src < 0) continue;
                const double* from = noisy.grid().data() + std::size_t(src) * kSceneFlowChannels;
                double* v = out.grid().data() + p * kSceneFlowChannels;
                v[kFlowU] = from[kFlowU];
                v[kFlowV] = from[kFlowV];
                v[kDisp1] = from[kDisp1];
            }
            break;
        }
    }
    return out;
}

LoadedField load_external_field(const std::filesystem::path& root, std::string_view id, Direction direction) {
    return read_scene_flow(root, id, direction);
}

}  // namespace dtf
