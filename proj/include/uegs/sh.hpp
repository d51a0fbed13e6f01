#pragma once

#include <Eigen/Dense>
#include <vector>

namespace uegs {

/// Maximum supported spherical-harmonics degree (25 coefficients).
inline constexpr int kMaxShDegree = 4;

inline constexpr double kSh0 = 0.28209479177387814; // Y_00

/// Number of coefficients for degree l: (l+1)^2.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real SH basis values at a unit direction, dc first, then ascending l
/// with m = -l..l. Band ordering and signs follow the common splatting
/// convention (degree <= 3 matches it exactly; degree 4 extends the same
/// sign rule). Writes (degree+1)^2 values into out.
void sh_basis(const Eigen::Vector3d& dir, int degree, double* out);

Eigen::VectorXd sh_basis(const Eigen::Vector3d& dir, int degree);

/// Sum_lm c_lm Y_lm(dir). coeffs must have (degree+1)^2 entries.
double sh_eval(const Eigen::VectorXd& coeffs, const Eigen::Vector3d& dir, int degree);

/// Deterministic Fibonacci-lattice point set on the unit sphere.
std::vector<Eigen::Vector3d> fibonacci_sphere(int n);

/// Least-squares SH fit of per-direction samples, ridge 1e-8 on the normal
/// equations. Throws std::invalid_argument when fewer than (degree+1)^2
/// samples are given or the direction set is rank-deficient.
Eigen::VectorXd sh_fit(const std::vector<double>& samples,
                       const std::vector<Eigen::Vector3d>& directions, int degree);

} // namespace uegs
