#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "dtf/grid.hpp"

namespace dtf {

enum class Component { D1 = 0, D2 = 1, OF = 2, SF = 3 };
enum class Region { all = 0, noc = 1, occ = 2 };

inline constexpr std::array<Component, 4> kComponents{Component::D1, Component::D2, Component::OF, Component::SF};
inline constexpr std::array<Region, 3> kRegions{Region::all, Region::noc, Region::occ};

std::string_view to_string(Component c);
std::string_view to_string(Region r);

/// KITTI outlier thresholds: an estimate is an outlier when it deviates by
/// more than `abs_px` pixels AND more than `rel` of the ground-truth magnitude.
struct OutlierThresholds {
    double abs_px = 3.0;
    double rel = 0.05;
};

bool is_outlier(double err, double magnitude, const OutlierThresholds& t = {});

/// Outlier rates (percent) and evaluated pixel counts per component and region.
/// A region without pixels has no rate.
class EvalReport {
public:
    std::optional<double> rate(Component c, Region r) const { return cell(c, r).rate; }
    std::size_t pixel_count(Component c, Region r) const { return cell(c, r).pixels; }

    void set(Component c, Region r, std::optional<double> rate, std::size_t pixels);

    /// Flat `component.region = rate` record, one key per line, with
    /// `component.region.pixels = N` count lines. Absent rates print as `absent`.
    std::string to_text() const;
    static EvalReport parse(std::string_view text);

    friend bool operator==(const EvalReport&, const EvalReport&) = default;

private:
    struct Cell {
        std::optional<double> rate;
        std::size_t pixels = 0;
        friend bool operator==(const Cell&, const Cell&) = default;
    };
    const Cell& cell(Component c, Region r) const { return cells_[int(c)][int(r)]; }
    std::array<std::array<Cell, 3>, 4> cells_{};
};

/// Per-pixel outlier flags of one component (D1, D2 or OF) over the valid pixels.
PixelMask component_outlier_map(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid,
                                Component component, const OutlierThresholds& t = {});

/// Pointwise union of the D1, D2 and OF outlier maps.
PixelMask scene_flow_outlier_map(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid,
                                 const OutlierThresholds& t = {});

EvalReport evaluate(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid,
                    const PixelMask& noc, const OutlierThresholds& t = {});

/// Pixel-weighted average of per-sample reports.
EvalReport aggregate(std::span<const EvalReport> reports);

/// Fraction of non-occluded pixels among the valid pixels of a data split.
class NocRatio {
public:
    static constexpr double kKittiTraining = 0.843;

    NocRatio() = default;
    explicit NocRatio(double ratio);
    double value() const { return ratio_; }

private:
    double ratio_ = kKittiTraining;
};

struct OccRateEstimate {
    double rate = 0.0;
    bool inconsistent = false;  ///< result outside [0, 100]: all/noc rates cannot come from one split
};

/// Occluded-only outlier rate recovered from all-region and noc-region rates
/// under a known non-occluded area ratio.
OccRateEstimate reconstruct_occ_rate(double all_rate, double noc_rate, const NocRatio& ratio = {});

struct MaskPair {
    const PixelMask* valid;
    const PixelMask* noc;
};

NocRatio measure_noc_ratio(std::span<const MaskPair> masks);

}  // namespace dtf
