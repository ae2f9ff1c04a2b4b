#include "dtf/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dtf/checkpoint.hpp"
#include "dtf/error.hpp"
#include "dtf/png_io.hpp"

namespace dtf {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

bool disparity_encodable(double d) {
    if (!std::isfinite(d)) return false;
    const double q = std::round(d * kDisparityScale);
    return q >= 1.0 && q <= 65535.0;
}

bool flow_encodable(double f) {
    if (!std::isfinite(f)) return false;
    const double q = std::round(f * kFlowScale + kFlowOffset);
    return q >= 0.0 && q <= 65535.0;
}

}  // namespace

void write_disparity_png(const fs::path& path, const Grid2D& disparity, const PixelMask& valid) {
    if (disparity.channels() != 1 || !valid.same_extent(disparity)) {
        throw ShapeError("write_disparity_png: expects a 1-channel grid and a matching mask");
    }
    Raster16 img(disparity.width(), disparity.height(), 1);
    for (int i = 0; i < disparity.height(); ++i) {
        for (int j = 0; j < disparity.width(); ++j) {
            if (!valid(i, j)) continue;
            const double d = disparity.at(i, j);
            if (!disparity_encodable(d)) {
                throw DataError("disparity " + std::to_string(d) + " at (" + std::to_string(i) + "," +
                                std::to_string(j) + ") cannot be encoded (valid range 1/512 .. 256 px)");
            }
            img.at(i, j) = std::uint16_t(std::round(d * kDisparityScale));
        }
    }
    write_png(path, img);
}

DisparityMap read_disparity_png(const fs::path& path) {
    const Raster16 img = read_png16(path);
    if (img.channels != 1) throw DataError("disparity image must be single-channel: " + path.string());
    DisparityMap out{Grid2D(img.height, img.width, 1), PixelMask(img.height, img.width, false)};
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            const std::uint16_t v = img.at(i, j);
            out.valid.set(i, j, v != 0);
            out.disparity.at(i, j) = double(v) / kDisparityScale;
        }
    }
    return out;
}

void write_flow_png(const fs::path& path, const Grid2D& flow, const PixelMask& valid) {
    if (flow.channels() != 2 || !valid.same_extent(flow)) {
        throw ShapeError("write_flow_png: expects a 2-channel grid and a matching mask");
    }
    Raster16 img(flow.width(), flow.height(), 3);
    for (int i = 0; i < flow.height(); ++i) {
        for (int j = 0; j < flow.width(); ++j) {
            if (!valid(i, j)) {
                img.at(i, j, 0) = img.at(i, j, 1) = std::uint16_t(kFlowOffset);
                continue;
            }
            for (int c = 0; c < 2; ++c) {
                const double f = flow.at(i, j, c);
                if (!flow_encodable(f)) {
                    throw DataError("flow " + std::to_string(f) + " at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") cannot be encoded (|f| < 512 px)");
                }
                img.at(i, j, c) = std::uint16_t(std::round(f * kFlowScale + kFlowOffset));
            }
            img.at(i, j, 2) = 1;
        }
    }
    write_png(path, img);
}

FlowMap read_flow_png(const fs::path& path) {
    const Raster16 img = read_png16(path);
    if (img.channels != 3) throw DataError("flow image must have three channels: " + path.string());
    FlowMap out{Grid2D(img.height, img.width, 2), PixelMask(img.height, img.width, false)};
    for (int i = 0; i < img.height; ++i) {
        for (int j = 0; j < img.width; ++j) {
            const std::uint16_t flag = img.at(i, j, 2);
            if (flag > 1) throw DataError("flow image has a malformed validity channel: " + path.string());
            out.valid.set(i, j, flag == 1);
            for (int c = 0; c < 2; ++c) out.flow.at(i, j, c) = (double(img.at(i, j, c)) - kFlowOffset) / kFlowScale;
        }
    }
    return out;
}

void write_mask_png(const fs::path& path, const PixelMask& mask) {
    Raster8 img(mask.width(), mask.height(), 1);
    for (int i = 0; i < mask.height(); ++i)
        for (int j = 0; j < mask.width(); ++j) img.at(i, j) = mask(i, j) ? 255 : 0;
    write_png(path, img);
}

PixelMask read_mask_png(const fs::path& path, MaskKind kind) {
    const Raster8 img = read_png8(path);
    if (img.channels != 1) throw DataError("mask image must be single-channel: " + path.string());
    PixelMask m(img.height, img.width, false, kind);
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j) m.set(i, j, img.at(i, j) > 127);
    return m;
}

void write_image_png(const fs::path& path, const Grid2D& image) {
    if (image.channels() != 1) throw ShapeError("write_image_png: expects a 1-channel grid");
    Raster8 img(image.width(), image.height(), 1);
    for (int i = 0; i < image.height(); ++i)
        for (int j = 0; j < image.width(); ++j)
            img.at(i, j) = std::uint8_t(std::lround(std::clamp(image.at(i, j), 0.0, 1.0) * 255.0));
    write_png(path, img);
}

Grid2D read_image_png(const fs::path& path) {
    const Raster8 img = read_png8(path);
    if (img.channels != 1) throw DataError("image must be single-channel: " + path.string());
    Grid2D g(img.height, img.width, 1);
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j) g.at(i, j) = img.at(i, j) / 255.0;
    return g;
}

fs::path image_path(const fs::path& root, std::string_view id, int slot) {
    static constexpr const char* kFrame[3] = {"_09.png", "_10.png", "_11.png"};
    if (slot < 0 || slot > 5) throw InvalidArgument("image slot out of range");
    return root / (slot < 3 ? "image_2" : "image_3") / (std::string(id) + kFrame[slot % 3]);
}

fs::path flow_path(const fs::path& root, std::string_view id, Direction d) {
    return root / (d == Direction::forward ? "flow_fw" : "flow_bw") / (std::string(id) + ".png");
}

fs::path disp0_path(const fs::path& root, std::string_view id) { return root / "disp0" / (std::string(id) + ".png"); }

fs::path disp1_path(const fs::path& root, std::string_view id, Direction d) {
    return root / (d == Direction::forward ? "disp1_fw" : "disp1_bw") / (std::string(id) + ".png");
}

fs::path noc_mask_path(const fs::path& root, std::string_view id, Direction d) {
    return root / (d == Direction::forward ? "mask_noc_fw" : "mask_noc_bw") / (std::string(id) + ".png");
}

PixelMask encodable_pixels(const SceneFlowField& field) {
    PixelMask m(field.height(), field.width(), false);
    for (int i = 0; i < field.height(); ++i)
        for (int j = 0; j < field.width(); ++j)
            m.set(i, j,
                  flow_encodable(field.at(i, j, kFlowU)) && flow_encodable(field.at(i, j, kFlowV)) &&
                      disparity_encodable(field.at(i, j, kDisp0)) && disparity_encodable(field.at(i, j, kDisp1)));
    return m;
}

void write_scene_flow(const fs::path& root, std::string_view id, const SceneFlowField& field, const PixelMask& valid) {
    write_flow_png(flow_path(root, id, field.direction()), field.grid().slice_channels(kFlowU, 2), valid);
    write_disparity_png(disp0_path(root, id), field.grid().slice_channels(kDisp0, 1), valid);
    write_disparity_png(disp1_path(root, id, field.direction()), field.grid().slice_channels(kDisp1, 1), valid);
}

LoadedField read_scene_flow(const fs::path& root, std::string_view id, Direction d) {
    const std::string sid(id);
    auto require = [&](const fs::path& p, const char* component) {
        if (!fs::exists(p)) {
            throw DataError("sample " + sid + ": missing " + component + " file " + p.string());
        }
    };
    const fs::path fp = flow_path(root, id, d), d0p = disp0_path(root, id), d1p = disp1_path(root, id, d);
    require(fp, "flow");
    require(d0p, "d0");
    require(d1p, "d1");

    const FlowMap flow = read_flow_png(fp);
    const DisparityMap d0 = read_disparity_png(d0p);
    const DisparityMap d1 = read_disparity_png(d1p);
    if (!flow.flow.same_extent(d0.disparity) || !flow.flow.same_extent(d1.disparity)) {
        throw DataError("sample " + sid + ": flow, d0 and d1 images differ in size");
    }
    LoadedField out{SceneFlowField(flow.flow.height(), flow.flow.width(), d),
                    PixelMask(flow.flow.height(), flow.flow.width(), false)};
    for (int i = 0; i < out.field.height(); ++i) {
        for (int j = 0; j < out.field.width(); ++j) {
            out.field.at(i, j, kFlowU) = flow.flow.at(i, j, 0);
            out.field.at(i, j, kFlowV) = flow.flow.at(i, j, 1);
            out.field.at(i, j, kDisp0) = d0.disparity.at(i, j);
            out.field.at(i, j, kDisp1) = d1.disparity.at(i, j);
            out.valid.set(i, j, flow.valid(i, j) && d0.valid(i, j) && d1.valid(i, j));
        }
    }
    return out;
}

void write_sample(const fs::path& root, const FrameTripletSample& s) {
    if (s.id.empty()) throw InvalidArgument("write_sample: sample needs an id");
    for (int k = 0; k < 6; ++k) write_image_png(image_path(root, s.id, k), s.images[std::size_t(k)]);
    write_scene_flow(root, s.id, s.gt_forward, s.valid_fw);
    write_mask_png(noc_mask_path(root, s.id, Direction::forward), s.noc_fw);
    if (s.gt_backward) {
        // d0 is shared between both directions and already written above.
        write_flow_png(flow_path(root, s.id, Direction::backward), s.gt_backward->grid().slice_channels(kFlowU, 2),
                       s.valid_bw);
        write_disparity_png(disp1_path(root, s.id, Direction::backward),
                            s.gt_backward->grid().slice_channels(kDisp1, 1), s.valid_bw);
        write_mask_png(noc_mask_path(root, s.id, Direction::backward), s.noc_bw);
    }
}

FrameTripletSample read_sample(const fs::path& root, std::string_view id) {
    FrameTripletSample s;
    s.id = std::string(id);
    for (int k = 0; k < 6; ++k) {
        const fs::path p = image_path(root, id, k);
        if (!fs::exists(p)) throw DataError("sample " + s.id + ": missing image " + p.string());
        s.images[std::size_t(k)] = read_image_png(p);
    }
    LoadedField fw = read_scene_flow(root, id, Direction::forward);
    s.gt_forward = std::move(fw.field);
    s.valid_fw = std::move(fw.valid);
    const fs::path noc_fw = noc_mask_path(root, id, Direction::forward);
    if (!fs::exists(noc_fw)) throw DataError("sample " + s.id + ": missing noc mask " + noc_fw.string());
    s.noc_fw = read_mask_png(noc_fw, MaskKind::noc);

    if (fs::exists(flow_path(root, id, Direction::backward))) {
        LoadedField bw = read_scene_flow(root, id, Direction::backward);
        const fs::path noc_bw = noc_mask_path(root, id, Direction::backward);
        if (!fs::exists(noc_bw)) throw DataError("sample " + s.id + ": missing noc mask " + noc_bw.string());
        s.gt_backward = std::move(bw.field);
        s.valid_bw = std::move(bw.valid);
        s.noc_bw = read_mask_png(noc_bw, MaskKind::noc);
    }
    if (!s.valid_fw.same_extent(s.noc_fw) || !s.gt_forward.grid().same_extent(s.images[0])) {
        throw DataError("sample " + s.id + ": components differ in size");
    }
    return s;
}

std::string manifest_text(const DatasetManifest& m) {
    std::string out = "# dtf dataset manifest v1\n";
    out += "split = " + m.split + "\n";
    if (!m.config.empty()) out += "config = " + m.config + "\n";
    out += "---\n";
    for (const std::string& id : m.ids) out += id + "\n";
    return out;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) { write_file_bytes(path, manifest_text(m)); }

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    DatasetManifest m;
    m.root = path.has_parent_path() ? path.parent_path() : fs::path(".");
    std::string line;
    bool body = false;
    while (std::getline(in, line)) {
        const std::string l = trim(line);
        if (l.empty() || l.front() == '#') continue;
        if (!body) {
            if (l == "---") {
                body = true;
                continue;
            }
            const auto eq = l.find('=');
            if (eq == std::string::npos) throw DataError("manifest header: expected key = value, got '" + l + "'");
            const std::string key = trim(std::string_view(l).substr(0, eq));
            const std::string value = trim(std::string_view(l).substr(eq + 1));
            if (key == "split") {
                if (value != "train" && value != "val" && value != "test") {
                    throw DataError("manifest: split must be train, val or test");
                }
                m.split = value;
            } else if (key == "config") {
                m.config = value;
            } else {
                throw DataError("manifest: unknown header key '" + key + "'");
            }
        } else {
            m.ids.push_back(l);
        }
    }
    if (!body) throw DataError("manifest " + path.string() + " has no '---' separator");
    for (const std::string& id : m.ids) {
        for (const fs::path& p : {image_path(m.root, id, FrameTripletSample::kLeftRef), flow_path(m.root, id, Direction::forward),
                                  disp0_path(m.root, id), disp1_path(m.root, id, Direction::forward),
                                  noc_mask_path(m.root, id, Direction::forward)}) {
            if (!fs::exists(p)) throw DataError("sample " + id + ": missing " + p.string());
        }
    }
    return m;
}

std::optional<FrameTripletSample> SampleStream::next() {
    if (cursor_ >= manifest_.ids.size()) return std::nullopt;
    return read_sample(manifest_.root, manifest_.ids[cursor_++]);
}

SampleStream iterate_samples(const DatasetManifest& manifest) { return SampleStream(manifest); }

std::vector<FrameTripletSample> load_all_samples(const DatasetManifest& manifest) {
    std::vector<FrameTripletSample> out;
    out.reserve(manifest.ids.size());
    SampleStream stream = iterate_samples(manifest);
    while (auto s = stream.next()) out.push_back(std::move(*s));
    return out;
}

}  // namespace dtf
