#pragma once

// Shared builders for the unit tests: deterministic random scenes, simple
// axis-aligned cameras, and a self-cleaning temp directory.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "uegs/sh.hpp"
#include "uegs/synthetic.hpp"
#include "uegs/types.hpp"

namespace testutil {

/// Unique directory under the system temp root, removed on destruction.
class TempDir {
public:
    TempDir() {
        auto pattern = (std::filesystem::temp_directory_path() / "uegs-unit-XXXXXX").string();
        if (::mkdtemp(pattern.data()) == nullptr)
            throw std::runtime_error("mkdtemp failed");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Camera on the -z axis looking at the origin along +z, identity rotation.
inline uegs::Camera axis_camera(int size = 32, double focal = 60.0, double distance = 4.0) {
    uegs::Camera cam;
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = 0.5 * size;
    cam.width = cam.height = size;
    cam.rotation = Eigen::Matrix3d::Identity();
    cam.translation = Eigen::Vector3d(0, 0, distance);
    return cam;
}

/// Random Gaussians in the unit ball with SH color of the given degree.
inline uegs::GaussianScene ball_scene(uegs::Rng& rng, int n, int sh_degree = 1) {
    uegs::GaussianScene scene;
    const int coeffs = uegs::sh_coeff_count(sh_degree);
    for (int i = 0; i < n; ++i) {
        uegs::GaussianPrimitive g;
        const double r = std::cbrt(rng.uniform());
        Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
        g.mean = r * dir.normalized();
        g.scale = Eigen::Vector3d(rng.uniform(0.05, 0.12), rng.uniform(0.05, 0.12),
                                  rng.uniform(0.05, 0.12));
        g.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal())
                         .normalized();
        g.opacity = rng.uniform(0.1, 0.6);
        g.sh_color.resize(3);
        for (int c = 0; c < 3; ++c) {
            g.sh_color[c] = Eigen::VectorXd::Zero(coeffs);
            g.sh_color[c][0] = rng.uniform(0.2, 0.9);
            for (int j = 1; j < coeffs; ++j) g.sh_color[c][j] = rng.uniform(-0.3, 0.3);
        }
        scene.gaussians.push_back(std::move(g));
    }
    return scene;
}

/// One Gaussian dead on the optical axis of a 65x65 identity camera, so the
/// center pixel (32,32) has its sampling point exactly at the projected mean
/// and alpha there equals the stored opacity.
struct CenteredSplat {
    uegs::GaussianScene scene;
    uegs::Camera cam;
    int cx = 32, cy = 32; // the exact-hit pixel
};

inline CenteredSplat centered_splat(double opacity = 0.5, double sigma = 0.05,
                                    double depth = 5.0) {
    CenteredSplat out;
    out.cam.fx = out.cam.fy = 100.0;
    out.cam.cx = out.cam.cy = 32.5;
    out.cam.width = out.cam.height = 65;
    out.cam.rotation = Eigen::Matrix3d::Identity();
    out.cam.translation = Eigen::Vector3d::Zero();

    uegs::GaussianPrimitive g;
    g.mean = Eigen::Vector3d(0, 0, depth);
    g.scale = Eigen::Vector3d::Constant(sigma);
    g.opacity = opacity;
    g.sh_color.assign(3, Eigen::VectorXd::Constant(1, 0.5 / uegs::kSh0));
    out.scene.gaussians.push_back(std::move(g));
    return out;
}

} // namespace testutil
