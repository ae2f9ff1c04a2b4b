#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dtf/grid.hpp"

namespace dtf {

/// Fronto-parallel textured rectangle moving rigidly with constant acceleration.
/// center(tau) = position + velocity * tau + 0.5 * acceleration * tau^2, tau in frames.
struct ObjectSpec {
    double width = 1.0;   ///< m
    double height = 1.0;  ///< m
    Eigen::Vector3d position = Eigen::Vector3d(0, 0, 10);
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
    Eigen::Vector3d acceleration = Eigen::Vector3d::Zero();
    std::uint64_t texture_seed = 0;
};

/// Constant ego-motion of the stereo rig, per frame. Rotation is yaw about the
/// camera y axis followed by pitch about the x axis.
struct CameraMotion {
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double yaw = 0.0;
    double pitch = 0.0;
};

struct SceneConfig {
    int width = 64;
    int height = 48;
    double focal = 100.0;            ///< px
    double baseline = 0.54;          ///< m, right camera sits at +baseline along the camera x axis
    double background_depth = 30.0;  ///< world z of the background plane, m
    std::uint64_t background_seed = 0;
    std::vector<ObjectSpec> objects;
    CameraMotion camera;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Scene with resolved trajectories at tau in {-1, 0, +1}; answers ray casts.
class SceneInstance {
public:
    static constexpr int kBackground = -1;

    explicit SceneInstance(SceneConfig config);

    const SceneConfig& config() const { return config_; }
    int width() const { return config_.width; }
    int height() const { return config_.height; }

    Eigen::Vector3d object_center(int object, double tau) const;
    Eigen::Vector3d camera_center(double tau) const;
    Eigen::Matrix3d camera_rotation(double tau) const;

    /// World point -> camera coordinates of the left camera at time tau.
    Eigen::Vector3d to_camera(const Eigen::Vector3d& world, double tau) const;

    struct Hit {
        int surface = kBackground;
        double depth = 0.0;  ///< camera z
        Eigen::Vector3d point = Eigen::Vector3d::Zero();
    };

    /// Nearest surface along the ray through image position (x, y) of the left
    /// (`right == false`) or right camera at time tau.
    Hit cast(double x, double y, double tau, bool right = false) const;

    /// Depth of the nearest surface other than `exclude` along a ray, if any.
    std::optional<double> nearest_other(double x, double y, double tau, int exclude) const;

    /// Surface point visible at the reference pixel, carried to time tau.
    Eigen::Vector3d carry(const Hit& hit, double tau) const;

    double texture(const Hit& hit, double tau) const;

private:
    std::optional<double> intersect(int surface, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                    double tau) const;

    SceneConfig config_;
    double cx_ = 0.0;
    double cy_ = 0.0;
};

/// Analytic scene flow for every reference pixel: the visible surface point at t
/// is projected at t +/- 1.
SceneFlowField analytic_field(const SceneInstance& scene, Direction direction);

/// (valid, noc). A reference pixel is occluded when its point leaves the image
/// or a strictly nearer surface covers its projection at t +/- 1. All pixels are valid.
std::pair<PixelMask, PixelMask> occlusion_masks(const SceneInstance& scene, Direction direction);

/// Six images (left t-1, t, t+1, right t-1, t, t+1) with values in [0, 1].
std::array<Grid2D, 6> render_images(const SceneInstance& scene);

FrameTripletSample generate_sample(const SceneConfig& config, std::string id = {});

/// Random scene family used to generate datasets.
struct SceneDistribution {
    int width = 64;
    int height = 48;
    double focal = 100.0;
    double baseline = 0.54;
    double background_depth_min = 25.0;
    double background_depth_max = 40.0;
    int objects_min = 1;
    int objects_max = 3;
    double object_size_min = 0.8;   ///< m
    double object_size_max = 2.0;
    double object_depth_min = 4.0;  ///< m
    double object_depth_max = 12.0;
    double lateral_speed_min = 0.0;  ///< |v_x|, m/frame, random sign
    double lateral_speed_max = 0.5;
    double vertical_speed_max = 0.1;
    double depth_speed_max = 0.0;    ///< |v_z|
    /// Acceleration = gain * velocity + N(0, accel_sigma) per axis.
    double accel_gain_min = 0.0;
    double accel_gain_max = 0.0;
    double accel_sigma = 0.0;
    double camera_forward_min = 0.0;  ///< m/frame along +z
    double camera_forward_max = 0.0;
    double camera_yaw_max = 0.0;      ///< rad/frame

    void validate() const;
    friend bool operator==(const SceneDistribution&, const SceneDistribution&) = default;
};

/// Named families: "static", "constant-velocity", "accelerated", "traffic".
SceneDistribution scene_preset(std::string_view name);
std::vector<std::string> scene_preset_names();

/// Draws a valid scene from the distribution; rejects and redraws scenes whose
/// objects would leave the half-space in front of the camera.
SceneConfig sample_scene(const SceneDistribution& dist, std::uint64_t seed);

}  // namespace dtf
