#include <cmath>
#include <numbers>
#include <stdexcept>

#include "doctest.h"
#include "uegs/sh.hpp"
#include "uegs/synthetic.hpp"

using namespace uegs;

TEST_CASE("degree-0 basis is the Y00 constant everywhere") {
    for (const auto& d : fibonacci_sphere(9)) {
        CHECK(sh_basis(d, 0)[0] == doctest::Approx(kSh0).epsilon(1e-14));
    }
}

TEST_CASE("degree-1 band follows the splatting sign convention") {
    const double c1 = 0.4886025119029199; // sqrt(3/(4 pi))
    const Eigen::Vector3d d = Eigen::Vector3d(0.3, -0.7, 0.648074069840786).normalized();
    const Eigen::VectorXd b = sh_basis(d, 1);
    CHECK(b[1] == doctest::Approx(-c1 * d.y()).epsilon(1e-12));
    CHECK(b[2] == doctest::Approx(c1 * d.z()).epsilon(1e-12));
    CHECK(b[3] == doctest::Approx(-c1 * d.x()).epsilon(1e-12));
}

TEST_CASE("every band satisfies the addition theorem") {
    // sum_m Y_lm(d)^2 = (2l+1)/(4 pi) for any unit d; this pins the
    // normalization of all 25 coefficients without trusting the basis code.
    for (const auto& d : fibonacci_sphere(17)) {
        const Eigen::VectorXd b = sh_basis(d, 4);
        int i = 0;
        for (int l = 0; l <= 4; ++l) {
            double band = 0.0;
            for (int m = -l; m <= l; ++m) band += b[i] * b[i], ++i;
            CHECK(band == doctest::Approx((2 * l + 1) / (4.0 * std::numbers::pi))
                              .epsilon(1e-12));
        }
    }
}

TEST_CASE("bands have parity (-1)^l") {
    const Eigen::Vector3d d = Eigen::Vector3d(-0.2, 0.5, 0.9).normalized();
    const Eigen::VectorXd plus = sh_basis(d, 4);
    const Eigen::VectorXd minus = sh_basis(-d, 4);
    int i = 0;
    for (int l = 0; l <= 4; ++l) {
        const double sign = (l % 2 == 0) ? 1.0 : -1.0;
        for (int m = -l; m <= l; ++m, ++i) {
            CHECK(minus[i] == doctest::Approx(sign * plus[i]).epsilon(1e-13));
        }
    }
}

TEST_CASE("basis is orthonormal under Monte Carlo integration") {
    const auto dirs = fibonacci_sphere(20000);
    std::vector<Eigen::VectorXd> basis;
    basis.reserve(dirs.size());
    for (const auto& d : dirs) basis.push_back(sh_basis(d, 4));
    const double scale = 4.0 * std::numbers::pi / static_cast<double>(dirs.size());
    double worst = 0.0;
    for (int i = 0; i < 25; ++i) {
        for (int j = i; j < 25; ++j) {
            double acc = 0.0;
            for (const auto& b : basis) acc += b[i] * b[j];
            worst = std::max(worst, std::abs(acc * scale - (i == j ? 1.0 : 0.0)));
        }
    }
    CHECK(worst < 1e-4); // measured 7.4e-6 on the 20000-point lattice
}

TEST_CASE("sh_eval is the coefficient dot product") {
    Rng rng(11);
    Eigen::VectorXd c(sh_coeff_count(3));
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = rng.uniform(-1, 1);
    const Eigen::Vector3d d = Eigen::Vector3d(1, 2, -2).normalized();
    CHECK(sh_eval(c, d, 3) == doctest::Approx(c.dot(sh_basis(d, 3))).epsilon(1e-14));
}

TEST_CASE("fibonacci_sphere is deterministic, unit length and balanced") {
    const auto a = fibonacci_sphere(256);
    const auto b = fibonacci_sphere(256);
    REQUIRE(a.size() == 256);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i].array() == b[i].array()).all());
        CHECK(a[i].norm() == doctest::Approx(1.0).epsilon(1e-12));
        mean += a[i];
    }
    CHECK((mean / 256.0).norm() < 0.02);
}

TEST_CASE("sh_fit recovers planted coefficients exactly") {
    Rng rng(7);
    const auto dirs = fibonacci_sphere(128);
    Eigen::VectorXd planted(sh_coeff_count(4));
    for (Eigen::Index i = 0; i < planted.size(); ++i) planted[i] = rng.uniform(-2, 2);
    std::vector<double> samples(dirs.size());
    for (std::size_t i = 0; i < dirs.size(); ++i) samples[i] = sh_eval(planted, dirs[i], 4);
    const Eigen::VectorXd fitted = sh_fit(samples, dirs, 4);
    CHECK((fitted - planted).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sh_fit input validation") {
    const auto few = fibonacci_sphere(10);
    std::vector<double> samples(few.size(), 1.0);
    CHECK_THROWS_AS(sh_fit(samples, few, 4), std::invalid_argument); // 10 < 25 samples

    // Plenty of samples but all at one direction: rank deficient.
    std::vector<Eigen::Vector3d> repeated(40, Eigen::Vector3d(0, 0, 1));
    std::vector<double> flat(repeated.size(), 1.0);
    CHECK_THROWS_AS(sh_fit(flat, repeated, 4), std::invalid_argument);

    CHECK_THROWS_AS(sh_fit(std::vector<double>(few.size() + 1, 1.0), few, 1),
                    std::invalid_argument); // size mismatch
}
