#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace rigidform {

/// Deterministic uniform/normal draws on top of std::mt19937_64. The standard
/// distributions are implementation-defined, so the mappings are spelled out
/// here to keep seeded outputs reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// uniform on the disk of given radius (rejection sampling)
    Eigen::Vector2d disk(double radius) {
        while (true) {
            const double px = uniform(-1.0, 1.0);
            const double py = uniform(-1.0, 1.0);
            if (px * px + py * py <= 1.0) return {radius * px, radius * py};
        }
    }

    /// uniform on the sphere of given radius in R^dim (zero vector for radius 0)
    Eigen::VectorXd sphere(int dim, double radius) {
        Eigen::VectorXd v(dim);
        double n2 = 0.0;
        do {
            for (int i = 0; i < dim; ++i) v(i) = normal();
            n2 = v.squaredNorm();
        } while (n2 == 0.0);
        return radius == 0.0 ? Eigen::VectorXd::Zero(dim).eval()
                             : (v * (radius / std::sqrt(n2))).eval();
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace rigidform
