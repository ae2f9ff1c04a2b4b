#include "dtf/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dtf/error.hpp"

namespace dtf {

std::string_view to_string(Component c) {
    switch (c) {
        case Component::D1: return "D1";
        case Component::D2: return "D2";
        case Component::OF: return "OF";
        case Component::SF: return "SF";
    }
    return "?";
}

std::string_view to_string(Region r) {
    switch (r) {
        case Region::all: return "all";
        case Region::noc: return "noc";
        case Region::occ: return "occ";
    }
    return "?";
}

bool is_outlier(double err, double magnitude, const OutlierThresholds& t) {
    if (std::isnan(err)) return true;  // a missing estimate never counts as correct
    return err > t.abs_px && err > t.rel * magnitude;
}

void EvalReport::set(Component c, Region r, std::optional<double> rate, std::size_t pixels) {
    if (rate && (!std::isfinite(*rate) || *rate < 0.0 || *rate > 100.0)) {
        throw InvalidArgument("outlier rate must lie in [0, 100]");
    }
    cells_[int(c)][int(r)] = Cell{rate, pixels};
}

std::string EvalReport::to_text() const {
    std::string out;
    char buf[96];
    for (Component c : kComponents) {
        for (Region r : kRegions) {
            const Cell& cl = cell(c, r);
            const std::string key = std::string(to_string(c)) + "." + std::string(to_string(r));
            if (cl.rate) {
                std::snprintf(buf, sizeof buf, "%.17g", *cl.rate);
                out += key + " = " + buf + "\n";
            } else {
                out += key + " = absent\n";
            }
            out += key + ".pixels = " + std::to_string(cl.pixels) + "\n";
        }
    }
    return out;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view s, std::string_view key) {
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw DataError("report: bad value for " + std::string(key) + ": '" + std::string(s) + "'");
    }
    return value;
}

}  // namespace

EvalReport EvalReport::parse(std::string_view text) {
    EvalReport report;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        std::string_view l = trim(line);
        if (l.empty() || l.front() == '#') continue;
        const auto eq = l.find('=');
        if (eq == std::string_view::npos) throw DataError("report: expected key = value, got '" + line + "'");
        const std::string_view key = trim(l.substr(0, eq));
        const std::string_view value = trim(l.substr(eq + 1));

        bool matched = false;
        for (Component c : kComponents) {
            for (Region r : kRegions) {
                const std::string base = std::string(to_string(c)) + "." + std::string(to_string(r));
                Cell& cl = report.cells_[int(c)][int(r)];
                if (key == base) {
                    if (value == "absent") {
                        cl.rate.reset();
                    } else {
                        const double v = parse_number<double>(value, key);
                        if (!(v >= 0.0 && v <= 100.0)) throw DataError("report: rate out of range for " + base);
                        cl.rate = v;
                    }
                    matched = true;
                } else if (key == base + ".pixels") {
                    cl.pixels = parse_number<std::size_t>(value, key);
                    matched = true;
                }
            }
        }
        if (!matched) throw DataError("report: unknown key '" + std::string(key) + "'");
    }
    return report;
}

PixelMask component_outlier_map(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid,
                                Component component, const OutlierThresholds& t) {
    if (!est.same_extent(gt) || !valid.same_extent(gt.grid())) {
        throw ShapeError("component_outlier_map: shape mismatch");
    }
    PixelMask out(gt.height(), gt.width(), false, MaskKind::valid);
    for (int i = 0; i < gt.height(); ++i) {
        for (int j = 0; j < gt.width(); ++j) {
            if (!valid(i, j)) continue;
            double err = 0.0;
            double mag = 0.0;
            switch (component) {
                case Component::D1:
                case Component::D2: {
                    const int ch = component == Component::D1 ? kDisp0 : kDisp1;
                    err = std::abs(est.at(i, j, ch) - gt.at(i, j, ch));
                    mag = std::abs(gt.at(i, j, ch));
                    break;
                }
                case Component::OF: {
                    const double du = est.at(i, j, kFlowU) - gt.at(i, j, kFlowU);
                    const double dv = est.at(i, j, kFlowV) - gt.at(i, j, kFlowV);
                    err = std::hypot(du, dv);
                    mag = std::hypot(gt.at(i, j, kFlowU), gt.at(i, j, kFlowV));
                    break;
                }
                default: throw InvalidArgument("component_outlier_map: component must be D1, D2 or OF");
            }
            out.set(i, j, is_outlier(err, mag, t));
        }
    }
    return out;
}

PixelMask scene_flow_outlier_map(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid,
                                 const OutlierThresholds& t) {
    PixelMask sf = component_outlier_map(est, gt, valid, Component::D1, t);
    for (Component c : {Component::D2, Component::OF}) {
        const PixelMask m = component_outlier_map(est, gt, valid, c, t);
        for (int i = 0; i < sf.height(); ++i)
            for (int j = 0; j < sf.width(); ++j) sf.set(i, j, sf(i, j) || m(i, j));
    }
    return sf;
}

EvalReport evaluate(const SceneFlowField& est, const SceneFlowField& gt, const PixelMask& valid, const PixelMask& noc,
                    const OutlierThresholds& t) {
    if (!valid.same_extent(noc)) throw ShapeError("evaluate: mask shape mismatch");
    const PixelMask occ = derive_occ_mask(valid, noc);
    const PixelMask noc_valid = mask_and(valid, noc);
    const std::array<const PixelMask*, 3> regions{&valid, &noc_valid, &occ};

    std::array<PixelMask, 4> maps{component_outlier_map(est, gt, valid, Component::D1, t),
                                  component_outlier_map(est, gt, valid, Component::D2, t),
                                  component_outlier_map(est, gt, valid, Component::OF, t), PixelMask{}};
    maps[3] = PixelMask(gt.height(), gt.width(), false);
    for (std::size_t p = 0; p < maps[3].pixels(); ++p) {
        const int i = int(p / gt.width()), j = int(p % gt.width());
        maps[3].set(i, j, maps[0].at_index(p) || maps[1].at_index(p) || maps[2].at_index(p));
    }

    EvalReport report;
    for (Component c : kComponents) {
        for (Region r : kRegions) {
            const PixelMask& region = *regions[int(r)];
            const PixelMask& outliers = maps[int(c)];
            std::size_t n = 0, bad = 0;
            for (std::size_t p = 0; p < region.pixels(); ++p) {
                if (!region.at_index(p)) continue;
                ++n;
                bad += outliers.at_index(p) ? 1 : 0;
            }
            report.set(c, r, n ? std::optional<double>(100.0 * double(bad) / double(n)) : std::nullopt, n);
        }
    }
    return report;
}

EvalReport aggregate(std::span<const EvalReport> reports) {
    if (reports.empty()) throw InvalidArgument("aggregate: empty report list");
    EvalReport out;
    for (Component c : kComponents) {
        for (Region r : kRegions) {
            double weighted = 0.0;
            std::size_t total = 0;
            for (const EvalReport& rep : reports) {
                const auto rate = rep.rate(c, r);
                if (!rate) continue;
                const std::size_t n = rep.pixel_count(c, r);
                weighted += *rate * double(n);
                total += n;
            }
            if (total == 0) {
                out.set(c, r, std::nullopt, 0);
            } else {
                out.set(c, r, std::min(100.0, weighted / double(total)), total);
            }
        }
    }
    return out;
}

NocRatio::NocRatio(double ratio) : ratio_(ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw InvalidArgument("noc ratio must lie strictly between 0 and 1, got " + std::to_string(ratio));
    }
}

OccRateEstimate reconstruct_occ_rate(double all_rate, double noc_rate, const NocRatio& ratio) {
    const double r = ratio.value();
    const double occ = (all_rate - noc_rate * r) / (1.0 - r);
    return {occ, occ < 0.0 || occ > 100.0};
}

NocRatio measure_noc_ratio(std::span<const MaskPair> masks) {
    if (masks.empty()) throw InvalidArgument("measure_noc_ratio: empty mask list");
    std::size_t valid = 0, noc = 0;
    for (const MaskPair& m : masks) {
        if (!m.valid->same_extent(*m.noc)) throw ShapeError("measure_noc_ratio: mask shape mismatch");
        for (std::size_t p = 0; p < m.valid->pixels(); ++p) {
            if (!m.valid->at_index(p)) continue;
            ++valid;
            noc += m.noc->at_index(p) ? 1 : 0;
        }
    }
    if (valid == 0) throw DataError("measure_noc_ratio: no valid pixels");
    return NocRatio(double(noc) / double(valid));
}

}  // namespace dtf
