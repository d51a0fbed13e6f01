#include "uegs/types.hpp"

#include <cmath>
#include <stdexcept>

namespace uegs {

namespace {
bool finite(const Eigen::Vector3d& v) {
    return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}
} // namespace

int GaussianPrimitive::sh_degree() const {
    if (sh_color.empty()) return -1;
    int n = static_cast<int>(sh_color[0].size());
    int l = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n)))) - 1;
    return l;
}

void GaussianScene::validate() const {
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto& g = gaussians[i];
        const std::string where = "gaussian " + std::to_string(i);
        if (std::abs(g.rotation.norm() - 1.0) > 1e-6)
            throw std::invalid_argument(where + ": quaternion norm deviates from 1");
        if (!(g.scale.x() > 0 && g.scale.y() > 0 && g.scale.z() > 0))
            throw std::invalid_argument(where + ": scale must be strictly positive");
        if (!(g.opacity >= 0.0 && g.opacity <= 1.0))
            throw std::invalid_argument(where + ": opacity outside [0,1]");
        if (!finite(g.mean) || !finite(g.scale))
            throw std::invalid_argument(where + ": non-finite mean or scale");
        if (!g.sh_color.empty()) {
            if (g.sh_color.size() != 3)
                throw std::invalid_argument(where + ": sh_color must have 3 channels");
            int n = static_cast<int>(g.sh_color[0].size());
            int l = g.sh_degree();
            if (l < 0 || (l + 1) * (l + 1) != n)
                throw std::invalid_argument(where + ": sh_color length is not (L+1)^2");
            for (const auto& ch : g.sh_color)
                if (ch.size() != n)
                    throw std::invalid_argument(where + ": sh_color channels differ in length");
        }
    }
}

void Camera::validate() const {
    if (!(fx > 0 && fy > 0))
        throw std::invalid_argument("camera: focal lengths must be positive");
    if (width < 1 || height < 1)
        throw std::invalid_argument("camera: image size must be at least 1x1");
    Eigen::Matrix3d should_be_identity = rotation * rotation.transpose();
    if ((should_be_identity - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw std::invalid_argument("camera: rotation is not orthonormal");
}

void ImageBuffer::validate() const {
    if (data.size() != static_cast<std::size_t>(width) * height * channels)
        throw std::invalid_argument("image: data length does not match width*height*channels");
    for (double v : data)
        if (!std::isfinite(v)) throw std::invalid_argument("image: non-finite value");
}

std::string to_string(ViewRole role) {
    switch (role) {
        case ViewRole::Train: return "train";
        case ViewRole::HoldoutTrainReg: return "holdout-train-reg";
        case ViewRole::HoldoutEval: return "holdout-eval";
    }
    return "train";
}

ViewRole view_role_from_string(const std::string& s) {
    if (s == "train") return ViewRole::Train;
    if (s == "holdout-train-reg") return ViewRole::HoldoutTrainReg;
    if (s == "holdout-eval") return ViewRole::HoldoutEval;
    throw std::invalid_argument("unknown view role: " + s);
}

void View::validate() const {
    camera.validate();
    auto check_dims = [&](const ImageBuffer& img, int ch, const char* name) {
        if (img.width != camera.width || img.height != camera.height)
            throw std::invalid_argument(std::string(name) + " for view " + id +
                                        " does not match camera dimensions");
        if (img.channels != ch)
            throw std::invalid_argument(std::string(name) + " for view " + id +
                                        " has wrong channel count");
    };
    check_dims(gt_color, 3, "gt_color");
    if (gt_depth) check_dims(*gt_depth, 1, "gt_depth");
    if (mask) check_dims(*mask, 1, "mask");
}

std::vector<std::size_t> ViewSet::indices_with_role(ViewRole role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i)
        if (views[i].role == role) out.push_back(i);
    return out;
}

void ViewSet::validate() const {
    for (const auto& v : views) v.validate();
}

Eigen::Matrix3d covariance_3d(const Eigen::Vector3d& scale, const Eigen::Quaterniond& rotation) {
    if (!finite(scale) || !std::isfinite(rotation.norm()))
        throw std::invalid_argument("covariance_3d: non-finite input");
    Eigen::Matrix3d R = rotation.toRotationMatrix();
    Eigen::Matrix3d M = R * scale.asDiagonal();
    Eigen::Matrix3d cov = M * M.transpose();
    // Force exact symmetry; the product above is symmetric only up to rounding.
    return 0.5 * (cov + cov.transpose());
}

} // namespace uegs
