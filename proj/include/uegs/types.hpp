#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uegs {

/// One scaled 3D Gaussian used as a rendering element. Scale holds plain
/// positive standard deviations and opacity is already in [0,1]; activation
/// (exp / sigmoid) happens at file load, not here.
struct GaussianPrimitive {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity(); // (w,x,y,z), unit norm
    double opacity = 1.0;
    // Per-channel SH coefficients, 3 channels of (L+1)^2 values each,
    // dc term first, then ascending l with m = -l..l.
    std::vector<Eigen::VectorXd> sh_color;

    int sh_degree() const;
};

struct GaussianScene {
    std::vector<GaussianPrimitive> gaussians;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    /// Throws std::invalid_argument if any primitive violates the type
    /// invariants (quaternion norm, positive scale, opacity range, SH length).
    void validate() const;
};

/// Pinhole camera with a world-to-camera rigid transform.
struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity(); // world -> camera
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p) const {
        return rotation * p + translation;
    }
    /// Camera center in world coordinates.
    Eigen::Vector3d center() const { return -(rotation.transpose() * translation); }
    /// Forward (optical) axis expressed in world coordinates, unit length.
    Eigen::Vector3d view_direction() const { return rotation.row(2).transpose(); }

    void validate() const;
};

/// Row-major, channel-interleaved scalar image.
struct ImageBuffer {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {}

    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    void validate() const;
};

enum class ViewRole { Train, HoldoutTrainReg, HoldoutEval };

std::string to_string(ViewRole role);
ViewRole view_role_from_string(const std::string& s);

/// A camera together with its ground-truth data. gt_depth and mask are
/// optional; mask is 1-channel with nonzero meaning "included".
struct View {
    std::string id;
    Camera camera;
    ViewRole role = ViewRole::Train;
    ImageBuffer gt_color;                 // 3 channels in [0,1]
    std::optional<ImageBuffer> gt_depth;  // 1 channel, world units
    std::optional<ImageBuffer> mask;      // 1 channel, binary

    void validate() const;
};

struct ViewSet {
    std::vector<View> views;

    std::size_t size() const { return views.size(); }
    std::vector<std::size_t> indices_with_role(ViewRole role) const;
    void validate() const;
};

/// R * diag(scale^2) * R^T for a unit quaternion. Symmetric PSD by
/// construction. Throws on non-finite inputs.
Eigen::Matrix3d covariance_3d(const Eigen::Vector3d& scale, const Eigen::Quaterniond& rotation);

} // namespace uegs
