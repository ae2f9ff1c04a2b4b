#include "dtf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Geometry>

#include "dtf/error.hpp"

namespace dtf {

namespace {

constexpr std::array<double, 3> kFrames{-1.0, 0.0, 1.0};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(std::uint64_t(ix) * 0x9E3779B97F4A7C15ull ^
                                                         splitmix64(std::uint64_t(iy))));
    return double(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double a, double b) {
    const double fa = std::floor(a), fb = std::floor(b);
    const auto ia = std::int64_t(fa), ib = std::int64_t(fb);
    const double ta = a - fa, tb = b - fb;
    const double sa = ta * ta * (3 - 2 * ta), sb = tb * tb * (3 - 2 * tb);
    const double v00 = lattice(seed, ia, ib), v10 = lattice(seed, ia + 1, ib);
    const double v01 = lattice(seed, ia, ib + 1), v11 = lattice(seed, ia + 1, ib + 1);
    return (v00 * (1 - sa) + v10 * sa) * (1 - sb) + (v01 * (1 - sa) + v11 * sa) * sb;
}

double surface_texture(std::uint64_t seed, double a, double b, double cell) {
    return 0.65 * value_noise(seed, a / cell, b / cell) + 0.35 * value_noise(seed + 1, 3 * a / cell, 3 * b / cell);
}

}  // namespace

void SceneConfig::validate() const {
    if (width < 1 || height < 1) throw InvalidArgument("scene: image size must be positive");
    if (!(focal > 0.0)) throw InvalidArgument("scene: focal length must be positive");
    if (!(baseline > 0.0)) throw InvalidArgument("scene: baseline must be positive");
    if (!(background_depth > 0.0)) throw InvalidArgument("scene: background depth must be positive");
    for (std::size_t k = 0; k < objects.size(); ++k) {
        if (!(objects[k].width > 0.0 && objects[k].height > 0.0)) {
            throw InvalidArgument("scene: object " + std::to_string(k) + " needs a positive extent");
        }
    }
}

SceneInstance::SceneInstance(SceneConfig config)
    : config_(std::move(config)), cx_((config_.width - 1) / 2.0), cy_((config_.height - 1) / 2.0) {
    config_.validate();
    constexpr double kMinDepth = 1e-3;
    for (double tau : kFrames) {
        for (std::size_t k = 0; k < config_.objects.size(); ++k) {
            const ObjectSpec& o = config_.objects[k];
            const Eigen::Vector3d c = object_center(int(k), tau);
            for (double sx : {-0.5, 0.5}) {
                for (double sy : {-0.5, 0.5}) {
                    const Eigen::Vector3d corner = c + Eigen::Vector3d(sx * o.width, sy * o.height, 0.0);
                    if (to_camera(corner, tau).z() <= kMinDepth) {
                        throw InvalidArgument("scene: object " + std::to_string(k) + " is behind the camera at frame " +
                                              std::to_string(int(tau)));
                    }
                }
            }
        }
        // The background plane must be hit by every ray of the image.
        const Eigen::Matrix3d R = camera_rotation(tau);
        for (double x : {-0.5, config_.width - 0.5}) {
            for (double y : {-0.5, config_.height - 0.5}) {
                const Eigen::Vector3d dir = R * Eigen::Vector3d((x - cx_) / config_.focal, (y - cy_) / config_.focal, 1);
                if (dir.z() <= 0.0) throw InvalidArgument("scene: camera rotation too large");
            }
        }
        if (camera_center(tau).z() + kMinDepth >= config_.background_depth) {
            throw InvalidArgument("scene: background plane behind the camera at frame " + std::to_string(int(tau)));
        }
    }
}

Eigen::Vector3d SceneInstance::object_center(int object, double tau) const {
    const ObjectSpec& o = config_.objects.at(std::size_t(object));
    return o.position + o.velocity * tau + 0.5 * o.acceleration * tau * tau;
}

Eigen::Vector3d SceneInstance::camera_center(double tau) const { return config_.camera.translation * tau; }

Eigen::Matrix3d SceneInstance::camera_rotation(double tau) const {
    return (Eigen::AngleAxisd(config_.camera.yaw * tau, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(config_.camera.pitch * tau, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

Eigen::Vector3d SceneInstance::to_camera(const Eigen::Vector3d& world, double tau) const {
    return camera_rotation(tau).transpose() * (world - camera_center(tau));
}

std::optional<double> SceneInstance::intersect(int surface, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                               double tau) const {
    if (std::abs(dir.z()) < 1e-12) return std::nullopt;
    const double plane_z = surface == kBackground ? config_.background_depth : object_center(surface, tau).z();
    const double s = (plane_z - origin.z()) / dir.z();
    if (!(s > 0.0)) return std::nullopt;
    if (surface != kBackground) {
        const ObjectSpec& o = config_.objects[std::size_t(surface)];
        const Eigen::Vector3d p = origin + s * dir;
        const Eigen::Vector3d c = object_center(surface, tau);
        if (std::abs(p.x() - c.x()) > 0.5 * o.width || std::abs(p.y() - c.y()) > 0.5 * o.height) return std::nullopt;
    }
    return s;
}

SceneInstance::Hit SceneInstance::cast(double x, double y, double tau, bool right) const {
    const Eigen::Matrix3d R = camera_rotation(tau);
    const Eigen::Vector3d origin =
        camera_center(tau) + (right ? Eigen::Vector3d(R * Eigen::Vector3d(config_.baseline, 0, 0)) : Eigen::Vector3d::Zero());
    const Eigen::Vector3d dir = R * Eigen::Vector3d((x - cx_) / config_.focal, (y - cy_) / config_.focal, 1.0);

    Hit best;
    best.depth = std::numeric_limits<double>::infinity();
    for (int s = 0; s < int(config_.objects.size()); ++s) {
        if (auto d = intersect(s, origin, dir, tau); d && *d < best.depth) {
            best.surface = s;
            best.depth = *d;
        }
    }
    if (auto d = intersect(kBackground, origin, dir, tau); d && *d < best.depth) {
        best.surface = kBackground;
        best.depth = *d;
    }
    best.point = origin + best.depth * dir;
    return best;
}

std::optional<double> SceneInstance::nearest_other(double x, double y, double tau, int exclude) const {
    const Eigen::Matrix3d R = camera_rotation(tau);
    const Eigen::Vector3d origin = camera_center(tau);
    const Eigen::Vector3d dir = R * Eigen::Vector3d((x - cx_) / config_.focal, (y - cy_) / config_.focal, 1.0);
    std::optional<double> best;
    for (int s = -1; s < int(config_.objects.size()); ++s) {
        if (s == exclude) continue;
        if (auto d = intersect(s, origin, dir, tau); d && (!best || *d < *best)) best = d;
    }
    return best;
}

Eigen::Vector3d SceneInstance::carry(const Hit& hit, double tau) const {
    if (hit.surface == kBackground) return hit.point;
    return hit.point - object_center(hit.surface, 0.0) + object_center(hit.surface, tau);
}

double SceneInstance::texture(const Hit& hit, double tau) const {
    if (hit.surface == kBackground) {
        return surface_texture(config_.background_seed, hit.point.x(), hit.point.y(), 0.8);
    }
    const Eigen::Vector3d local = hit.point - object_center(hit.surface, tau);
    return surface_texture(config_.objects[std::size_t(hit.surface)].texture_seed, local.x(), local.y(), 0.2);
}

SceneFlowField analytic_field(const SceneInstance& scene, Direction direction) {
    const SceneConfig& cfg = scene.config();
    const double tau = direction == Direction::forward ? 1.0 : -1.0;
    const double fb = cfg.focal * cfg.baseline;
    const double cx = (cfg.width - 1) / 2.0, cy = (cfg.height - 1) / 2.0;
    SceneFlowField field(cfg.height, cfg.width, direction);
    for (int i = 0; i < cfg.height; ++i) {
        for (int j = 0; j < cfg.width; ++j) {
            const SceneInstance::Hit hit = scene.cast(j, i, 0.0);
            const Eigen::Vector3d pc = scene.to_camera(scene.carry(hit, tau), tau);
            field.at(i, j, kFlowU) = cfg.focal * pc.x() / pc.z() + cx - j;
            field.at(i, j, kFlowV) = cfg.focal * pc.y() / pc.z() + cy - i;
            field.at(i, j, kDisp0) = fb / hit.depth;
            field.at(i, j, kDisp1) = fb / pc.z();
        }
    }
    return field;
}

std::pair<PixelMask, PixelMask> occlusion_masks(const SceneInstance& scene, Direction direction) {
    const SceneConfig& cfg = scene.config();
    const double tau = direction == Direction::forward ? 1.0 : -1.0;
    const double cx = (cfg.width - 1) / 2.0, cy = (cfg.height - 1) / 2.0;
    PixelMask valid(cfg.height, cfg.width, true, MaskKind::valid);
    PixelMask noc(cfg.height, cfg.width, true, MaskKind::noc);
    for (int i = 0; i < cfg.height; ++i) {
        for (int j = 0; j < cfg.width; ++j) {
            const SceneInstance::Hit hit = scene.cast(j, i, 0.0);
            const Eigen::Vector3d pc = scene.to_camera(scene.carry(hit, tau), tau);
            bool occluded = !(pc.z() > 0.0);
            if (!occluded) {
                const double x = cfg.focal * pc.x() / pc.z() + cx;
                const double y = cfg.focal * pc.y() / pc.z() + cy;
                occluded = x < -0.5 || x >= cfg.width - 0.5 || y < -0.5 || y >= cfg.height - 0.5;
                if (!occluded) {
                    const auto other = scene.nearest_other(x, y, tau, hit.surface);
                    occluded = other && *other < pc.z() * (1.0 - 1e-9);
                }
            }
            noc.set(i, j, !occluded);
        }
    }
    return {std::move(valid), std::move(noc)};
}

std::array<Grid2D, 6> render_images(const SceneInstance& scene) {
    std::array<Grid2D, 6> images;
    for (int k = 0; k < 6; ++k) {
        const double tau = kFrames[std::size_t(k % 3)];
        const bool right = k >= 3;
        Grid2D img(scene.height(), scene.width(), 1);
        for (int i = 0; i < scene.height(); ++i)
            for (int j = 0; j < scene.width(); ++j) img.at(i, j) = scene.texture(scene.cast(j, i, tau, right), tau);
        images[std::size_t(k)] = std::move(img);
    }
    return images;
}

FrameTripletSample generate_sample(const SceneConfig& config, std::string id) {
    const SceneInstance scene(config);
    FrameTripletSample s;
    s.id = std::move(id);
    s.images = render_images(scene);
    s.gt_forward = analytic_field(scene, Direction::forward);
    s.gt_backward = analytic_field(scene, Direction::backward);
    std::tie(s.valid_fw, s.noc_fw) = occlusion_masks(scene, Direction::forward);
    std::tie(s.valid_bw, s.noc_bw) = occlusion_masks(scene, Direction::backward);
    return s;
}

void SceneDistribution::validate() const {
    auto range = [](double lo, double hi, const char* what) {
        if (!(lo <= hi)) throw InvalidArgument(std::string("scene distribution: empty range for ") + what);
    };
    if (width < 1 || height < 1 || !(focal > 0) || !(baseline > 0)) {
        throw InvalidArgument("scene distribution: bad camera parameters");
    }
    range(background_depth_min, background_depth_max, "background depth");
    range(object_size_min, object_size_max, "object size");
    range(object_depth_min, object_depth_max, "object depth");
    range(lateral_speed_min, lateral_speed_max, "lateral speed");
    range(accel_gain_min, accel_gain_max, "acceleration gain");
    range(camera_forward_min, camera_forward_max, "camera forward speed");
    if (objects_min < 0 || objects_min > objects_max) throw InvalidArgument("scene distribution: bad object count");
    if (!(object_depth_min > 0) || !(background_depth_min > object_depth_max)) {
        throw InvalidArgument("scene distribution: objects must lie in front of the background");
    }
    if (accel_sigma < 0 || vertical_speed_max < 0 || depth_speed_max < 0 || camera_yaw_max < 0) {
        throw InvalidArgument("scene distribution: negative spread");
    }
}

std::vector<std::string> scene_preset_names() { return {"static", "constant-velocity", "accelerated", "traffic"}; }

SceneDistribution scene_preset(std::string_view name) {
    SceneDistribution d;
    if (name == "static") {
        d.lateral_speed_max = 0.0;
        d.vertical_speed_max = 0.0;
    } else if (name == "constant-velocity") {
        d.lateral_speed_max = 0.6;
        d.vertical_speed_max = 0.1;
    } else if (name == "accelerated") {
        // Objects speeding up along their direction of travel under forward ego-motion.
        d.objects_min = 2;
        d.objects_max = 4;
        d.lateral_speed_min = 0.2;
        d.lateral_speed_max = 0.6;
        d.vertical_speed_max = 0.05;
        d.depth_speed_max = 0.1;
        d.accel_gain_min = 0.4;
        d.accel_gain_max = 0.8;
        d.accel_sigma = 0.02;
        d.camera_forward_min = 0.0;
        d.camera_forward_max = 0.6;
    } else if (name == "traffic") {
        d.objects_min = 2;
        d.objects_max = 4;
        d.lateral_speed_min = 0.1;
        d.lateral_speed_max = 0.6;
        d.vertical_speed_max = 0.05;
        d.depth_speed_max = 0.1;
        d.accel_gain_min = 0.0;
        d.accel_gain_max = 0.2;
        d.camera_forward_min = 0.0;
        d.camera_forward_max = 0.8;
        d.camera_yaw_max = 0.005;
    } else {
        throw InvalidArgument("unknown scene preset '" + std::string(name) + "'");
    }
    return d;
}

SceneConfig sample_scene(const SceneDistribution& dist, std::uint64_t seed) {
    dist.validate();
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](double lo, double hi) { return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto symmetric = [&uniform](double m) { return m == 0.0 ? 0.0 : uniform(-m, m); };

    for (int attempt = 0; attempt < 1000; ++attempt) {
        SceneConfig cfg;
        cfg.width = dist.width;
        cfg.height = dist.height;
        cfg.focal = dist.focal;
        cfg.baseline = dist.baseline;
        cfg.seed = seed;
        cfg.background_depth = uniform(dist.background_depth_min, dist.background_depth_max);
        cfg.background_seed = rng();
        cfg.camera.translation = Eigen::Vector3d(0, 0, uniform(dist.camera_forward_min, dist.camera_forward_max));
        cfg.camera.yaw = symmetric(dist.camera_yaw_max);

        const int n = std::uniform_int_distribution<int>(dist.objects_min, dist.objects_max)(rng);
        for (int k = 0; k < n; ++k) {
            ObjectSpec o;
            o.width = uniform(dist.object_size_min, dist.object_size_max);
            o.height = uniform(dist.object_size_min, dist.object_size_max);
            const double z = uniform(dist.object_depth_min, dist.object_depth_max);
            const double xn = uniform(-0.7, 0.7), yn = uniform(-0.5, 0.6);
            o.position = Eigen::Vector3d(xn * 0.5 * dist.width / dist.focal * z, yn * 0.5 * dist.height / dist.focal * z, z);
            double vx = uniform(dist.lateral_speed_min, dist.lateral_speed_max);
            if (uniform(0.0, 1.0) < 0.5) vx = -vx;
            o.velocity = Eigen::Vector3d(vx, symmetric(dist.vertical_speed_max), symmetric(dist.depth_speed_max));
            const double gain = uniform(dist.accel_gain_min, dist.accel_gain_max);
            o.acceleration = gain * o.velocity;
            if (dist.accel_sigma > 0.0) {
                std::normal_distribution<double> noise(0.0, dist.accel_sigma);
                for (int a = 0; a < 3; ++a) o.acceleration[a] += noise(rng);
            }
            o.texture_seed = rng();
            cfg.objects.push_back(o);
        }
        try {
            SceneInstance check(cfg);
            return cfg;
        } catch (const InvalidArgument&) {
            continue;
        }
    }
    throw InvalidArgument("sample_scene: could not draw a valid scene");
}

}  // namespace dtf
