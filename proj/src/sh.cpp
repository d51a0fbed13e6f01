#include "uegs/sh.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uegs {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
constexpr double kC4[7] = {2.5033429417967046, 1.7701307697799304, 0.9461746957575601,
                           0.6690465435572892, 0.10578554691520431, 0.47308734787878004,
                           0.6258357354491761};

} // namespace

void sh_basis(const Eigen::Vector3d& dir, int degree, double* out) {
    if (degree < 0 || degree > kMaxShDegree)
        throw std::invalid_argument("sh_basis: degree out of range 0..4");
    const double x = dir.x(), y = dir.y(), z = dir.z();
    const double xx = x * x, yy = y * y, zz = z * z;

    out[0] = kSh0;
    if (degree < 1) return;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (degree < 2) return;
    out[4] = kC2[0] * x * y;
    out[5] = kC2[1] * y * z;
    out[6] = kC2[2] * (2.0 * zz - xx - yy);
    out[7] = kC2[3] * x * z;
    out[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = kC3[0] * y * (3.0 * xx - yy);
    out[10] = kC3[1] * x * y * z;
    out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kC3[5] * z * (xx - yy);
    out[15] = kC3[6] * x * (xx - 3.0 * yy);
    if (degree < 4) return;
    out[16] = kC4[0] * x * y * (xx - yy);
    out[17] = -kC4[1] * y * z * (3.0 * xx - yy);
    out[18] = kC4[2] * x * y * (7.0 * zz - 1.0);
    out[19] = -kC4[3] * y * z * (7.0 * zz - 3.0);
    out[20] = kC4[4] * (35.0 * zz * zz - 30.0 * zz + 3.0);
    out[21] = -kC4[3] * x * z * (7.0 * zz - 3.0);
    out[22] = kC4[5] * (xx - yy) * (7.0 * zz - 1.0);
    out[23] = -kC4[1] * x * z * (xx - 3.0 * yy);
    out[24] = kC4[6] * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

Eigen::VectorXd sh_basis(const Eigen::Vector3d& dir, int degree) {
    Eigen::VectorXd out(sh_coeff_count(degree));
    sh_basis(dir, degree, out.data());
    return out;
}

double sh_eval(const Eigen::VectorXd& coeffs, const Eigen::Vector3d& dir, int degree) {
    const int n = sh_coeff_count(degree);
    if (coeffs.size() != n)
        throw std::invalid_argument("sh_eval: coefficient count does not match degree");
    double basis[25];
    sh_basis(dir, degree, basis);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += coeffs[i] * basis[i];
    return acc;
}

std::vector<Eigen::Vector3d> fibonacci_sphere(int n) {
    if (n < 1) throw std::invalid_argument("fibonacci_sphere: n must be >= 1");
    std::vector<Eigen::Vector3d> dirs;
    dirs.reserve(n);
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        double z = 1.0 - 2.0 * (i + 0.5) / n;
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double phi = golden_angle * i;
        dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
    return dirs;
}

Eigen::VectorXd sh_fit(const std::vector<double>& samples,
                       const std::vector<Eigen::Vector3d>& directions, int degree) {
    const int n = sh_coeff_count(degree);
    const int m = static_cast<int>(directions.size());
    if (samples.size() != directions.size())
        throw std::invalid_argument("sh_fit: samples and directions differ in length");
    if (m < n) throw std::invalid_argument("sh_fit: need at least (degree+1)^2 samples");

    Eigen::MatrixXd design(m, n);
    double row[25];
    for (int i = 0; i < m; ++i) {
        sh_basis(directions[i], degree, row);
        for (int j = 0; j < n; ++j) design(i, j) = row[j];
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < n)
        throw std::invalid_argument("sh_fit: degenerate direction set (rank-deficient design)");

    Eigen::MatrixXd gram = design.transpose() * design;
    gram.diagonal().array() += 1e-8;
    Eigen::VectorXd rhs =
        design.transpose() * Eigen::Map<const Eigen::VectorXd>(samples.data(), m);
    return gram.ldlt().solve(rhs);
}

} // namespace uegs
