#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtf/grid.hpp"

namespace dtf {

// KITTI community encodings ----------------------------------------------------

/// 16-bit gray: stored = round(d * 256), 0 marks an invalid pixel.
inline constexpr double kDisparityScale = 256.0;
/// 16-bit RGB: stored = round(f * 64 + 2^15) for u and v, third channel 1 = valid.
inline constexpr double kFlowScale = 64.0;
inline constexpr double kFlowOffset = 32768.0;

struct DisparityMap {
    Grid2D disparity;  ///< 1 channel
    PixelMask valid;
};

struct FlowMap {
    Grid2D flow;  ///< 2 channels
    PixelMask valid;
};

void write_disparity_png(const std::filesystem::path& path, const Grid2D& disparity, const PixelMask& valid);
DisparityMap read_disparity_png(const std::filesystem::path& path);

void write_flow_png(const std::filesystem::path& path, const Grid2D& flow, const PixelMask& valid);
FlowMap read_flow_png(const std::filesystem::path& path);

/// 8-bit gray, 255 where set.
void write_mask_png(const std::filesystem::path& path, const PixelMask& mask);
PixelMask read_mask_png(const std::filesystem::path& path, MaskKind kind);

/// 8-bit gray rendering of a single-channel grid with values in [0, 1].
void write_image_png(const std::filesystem::path& path, const Grid2D& image);
Grid2D read_image_png(const std::filesystem::path& path);

// Per-sample directory layout ---------------------------------------------------
//
//   image_2/<id>_09.png <id>_10.png <id>_11.png   left camera at t-1, t, t+1
//   image_3/<id>_09.png <id>_10.png <id>_11.png   right camera
//   flow_fw/<id>.png  flow_bw/<id>.png
//   disp0/<id>.png    disp1_fw/<id>.png  disp1_bw/<id>.png
//   mask_noc_fw/<id>.png  mask_noc_bw/<id>.png

std::filesystem::path image_path(const std::filesystem::path& root, std::string_view id, int slot);
std::filesystem::path flow_path(const std::filesystem::path& root, std::string_view id, Direction d);
std::filesystem::path disp0_path(const std::filesystem::path& root, std::string_view id);
std::filesystem::path disp1_path(const std::filesystem::path& root, std::string_view id, Direction d);
std::filesystem::path noc_mask_path(const std::filesystem::path& root, std::string_view id, Direction d);

/// Pixels whose four channels all fit the PNG codecs.
PixelMask encodable_pixels(const SceneFlowField& field);

struct LoadedField {
    SceneFlowField field;
    PixelMask valid;  ///< flow, d0 and d1 all valid
};

/// Writes flow, d0 and d1 of a field under `root` (direction selects the
/// flow_fw/flow_bw and disp1_fw/disp1_bw folders). Pixels outside `valid` are
/// stored as invalid.
void write_scene_flow(const std::filesystem::path& root, std::string_view id, const SceneFlowField& field,
                      const PixelMask& valid);
LoadedField read_scene_flow(const std::filesystem::path& root, std::string_view id, Direction d);

void write_sample(const std::filesystem::path& root, const FrameTripletSample& sample);
/// Backward ground truth is optional: when flow_bw is absent the sample has no gt_backward.
FrameTripletSample read_sample(const std::filesystem::path& root, std::string_view id);

// Manifest ----------------------------------------------------------------------

/// Plain-text manifest:
///
///   # dtf dataset manifest v1
///   split = train
///   config = generate.cfg        (optional)
///   ---
///   000000
///   000001
struct DatasetManifest {
    std::filesystem::path root;  ///< directory of the manifest file
    std::string split = "train";
    std::string config;          ///< relative path of the generating config, may be empty
    std::vector<std::string> ids;
};

std::string manifest_text(const DatasetManifest& manifest);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Parses the manifest and checks that every mandatory file exists.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Lazily loads the samples of a manifest in listed order.
class SampleStream {
public:
    explicit SampleStream(DatasetManifest manifest) : manifest_(std::move(manifest)) {}
    std::optional<FrameTripletSample> next();
    std::size_t size() const { return manifest_.ids.size(); }

private:
    DatasetManifest manifest_;
    std::size_t cursor_ = 0;
};

SampleStream iterate_samples(const DatasetManifest& manifest);

/// Loads every sample of a manifest into memory.
std::vector<FrameTripletSample> load_all_samples(const DatasetManifest& manifest);

}  // namespace dtf
