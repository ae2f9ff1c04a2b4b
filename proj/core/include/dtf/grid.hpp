#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dtf {

/// Dense H x W grid of per-pixel vectors with `channels` entries each.
/// Storage is row-major over pixels, channels contiguous per pixel.
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(int height, int width, int channels, double fill = 0.0);
    Grid2D(int height, int width, int channels, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& at(int i, int j, int c = 0) { return values_[index(i, j, c)]; }
    double at(int i, int j, int c = 0) const { return values_[index(i, j, c)]; }

    std::span<double> pixel(int i, int j) { return {values_.data() + index(i, j, 0), std::size_t(channels_)}; }
    std::span<const double> pixel(int i, int j) const {
        return {values_.data() + index(i, j, 0), std::size_t(channels_)};
    }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool same_shape(const Grid2D& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }
    bool same_extent(const Grid2D& other) const { return height_ == other.height_ && width_ == other.width_; }

    /// Copy of a contiguous channel range [first, first + count).
    Grid2D slice_channels(int first, int count) const;

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

private:
    std::size_t index(int i, int j, int c) const {
        return (static_cast<std::size_t>(i) * width_ + j) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> values_;
};

/// Stacks grids of equal extent along the channel axis.
Grid2D concat_channels(std::span<const Grid2D* const> parts);

enum class Direction { forward, backward };

const char* to_string(Direction d);

/// Channel order of a scene flow field: optical flow (u, v), disparity at the
/// reference time, disparity at the target time registered to the reference pixel.
enum SceneFlowChannel : int { kFlowU = 0, kFlowV = 1, kDisp0 = 2, kDisp1 = 3 };
inline constexpr int kSceneFlowChannels = 4;

/// Four-channel (u, v, d0, d1) field anchored at the reference frame.
class SceneFlowField {
public:
    SceneFlowField() = default;
    SceneFlowField(int height, int width, Direction direction);
    SceneFlowField(Grid2D grid, Direction direction);

    int height() const { return grid_.height(); }
    int width() const { return grid_.width(); }
    Direction direction() const { return direction_; }

    const Grid2D& grid() const { return grid_; }
    Grid2D& grid() { return grid_; }

    double& at(int i, int j, int c) { return grid_.at(i, j, c); }
    double at(int i, int j, int c) const { return grid_.at(i, j, c); }

    bool same_extent(const SceneFlowField& o) const { return grid_.same_extent(o.grid_); }

    friend bool operator==(const SceneFlowField&, const SceneFlowField&) = default;

private:
    Grid2D grid_;
    Direction direction_ = Direction::forward;
};

enum class MaskKind { valid, noc, occ };

/// Boolean per-pixel mask.
class PixelMask {
public:
    PixelMask() = default;
    PixelMask(int height, int width, bool fill, MaskKind kind = MaskKind::valid);

    int height() const { return height_; }
    int width() const { return width_; }
    MaskKind kind() const { return kind_; }
    void set_kind(MaskKind k) { kind_ = k; }

    bool operator()(int i, int j) const { return bits_[std::size_t(i) * width_ + j] != 0; }
    void set(int i, int j, bool v) { bits_[std::size_t(i) * width_ + j] = v ? 1 : 0; }

    bool at_index(std::size_t p) const { return bits_[p] != 0; }
    std::size_t pixels() const { return bits_.size(); }
    std::size_t count() const;

    bool same_extent(const PixelMask& o) const { return height_ == o.height_ && width_ == o.width_; }
    bool same_extent(const Grid2D& g) const { return height_ == g.height() && width_ == g.width(); }

    friend bool operator==(const PixelMask& a, const PixelMask& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.bits_ == b.bits_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    MaskKind kind_ = MaskKind::valid;
    std::vector<std::uint8_t> bits_;
};

/// Stereo frames plus forward/backward ground truth for one reference time.
struct FrameTripletSample {
    enum ImageSlot : int { kLeftPrev = 0, kLeftRef, kLeftNext, kRightPrev, kRightRef, kRightNext };

    std::string id;
    std::array<Grid2D, 6> images;
    SceneFlowField gt_forward;
    std::optional<SceneFlowField> gt_backward;
    PixelMask valid_fw, noc_fw;
    PixelMask valid_bw, noc_bw;

    int height() const { return gt_forward.height(); }
    int width() const { return gt_forward.width(); }
    bool has_backward() const { return gt_backward.has_value(); }

    const SceneFlowField& gt(Direction d) const;
    const PixelMask& valid(Direction d) const { return d == Direction::forward ? valid_fw : valid_bw; }
    const PixelMask& noc(Direction d) const { return d == Direction::forward ? noc_fw : noc_bw; }
};

/// Two-channel grid of normalized image coordinates: x in channel 0, y in channel 1,
/// both spanning [-1, 1] across the image. A dimension of size 1 maps to 0.
Grid2D normalized_coordinate_grid(int height, int width);

/// occ = valid AND NOT noc.
PixelMask derive_occ_mask(const PixelMask& valid, const PixelMask& noc);

PixelMask mask_and(const PixelMask& a, const PixelMask& b);

}  // namespace dtf
