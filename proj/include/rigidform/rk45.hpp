#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include <Eigen/Dense>

namespace rigidform {

enum class Rk45Status { completed, step_underflow, non_finite, step_limit };

struct Rk45Settings {
    double rtol = 1e-9;
    double atol = 1e-11;
    double initial_step = 0.0;  // 0 = choose automatically
    double max_step = std::numeric_limits<double>::infinity();
    double min_step = 1e-14;    // relative to the span being integrated
    std::int64_t max_steps = 100'000'000;
};

/// Dormand-Prince 5(4) with FSAL and standard PI-free step control.
/// Integrates from t0 to t1 and lands each output sample t0 + j*stride exactly
/// by clamping the step, so recorded states carry step-endpoint accuracy
/// (no interpolation). The observer receives (t, y, dydt) at every sample,
/// including t0.
template <class Rhs, class Observer>
Rk45Status integrate_sampled(Rhs&& rhs, Eigen::VectorXd y, double t0, double t1, double stride,
                             Observer&& observe, const Rk45Settings& s = {}) {
    // Butcher tableau
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // error weights: 5th-order solution minus embedded 4th-order one
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    const auto dim = y.size();
    Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
    Eigen::VectorXd ytmp(dim), ynew(dim), yerr(dim);

    double t = t0;
    rhs(t, y, k1);
    observe(t, y, k1);
    if (t1 <= t0) return Rk45Status::completed;

    const double span = t1 - t0;
    const double hmin = s.min_step * span;

    // initial step from the derivative scale
    double h = s.initial_step;
    if (h <= 0.0) {
        const double dy = k1.norm();
        const double yn = y.norm();
        h = dy > 0.0 ? 0.01 * (yn + 1.0) / dy : 1e-4 * span;
        h = std::min(h, span);
    }
    h = std::min({h, s.max_step, stride > 0.0 ? stride : span});

    long next_sample = 1;
    double last_observed = t0;
    auto sample_time = [&](long j) { return stride > 0.0 ? std::min(t0 + j * stride, t1) : t1; };

    for (std::int64_t steps = 0; t < t1 - hmin; ++steps) {
        if (steps >= s.max_steps) return Rk45Status::step_limit;
        const double t_target = sample_time(next_sample);
        if (t_target - t <= hmin) {
            // sample time coincides with the current state up to rounding
            if (t > last_observed) {
                observe(t, y, k1);
                last_observed = t;
            }
            ++next_sample;
            continue;
        }
        bool hits_sample = false;
        double hstep = std::min(h, s.max_step);
        if (t + hstep >= t_target - 1e-12 * span) {
            hstep = t_target - t;
            hits_sample = true;
        }
        if (hstep < hmin) return Rk45Status::step_underflow;

        ytmp = y + hstep * (a21 * k1);
        rhs(t + c2 * hstep, ytmp, k2);
        ytmp = y + hstep * (a31 * k1 + a32 * k2);
        rhs(t + c3 * hstep, ytmp, k3);
        ytmp = y + hstep * (a41 * k1 + a42 * k2 + a43 * k3);
        rhs(t + c4 * hstep, ytmp, k4);
        ytmp = y + hstep * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        rhs(t + c5 * hstep, ytmp, k5);
        ytmp = y + hstep * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        rhs(t + hstep, ytmp, k6);
        ynew = y + hstep * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        rhs(t + hstep, ynew, k7);
        yerr = hstep * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        if (!ynew.allFinite()) return Rk45Status::non_finite;

        double err = 0.0;
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double sc = s.atol + s.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
            const double q = yerr(i) / sc;
            err += q * q;
        }
        err = std::sqrt(err / static_cast<double>(dim));

        if (err <= 1.0) {
            t = hits_sample ? t_target : t + hstep;
            y.swap(ynew);
            k1.swap(k7);  // FSAL
            if (hits_sample) {
                observe(t, y, k1);
                last_observed = t;
                ++next_sample;
            }
            const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
            h = hstep * std::clamp(fac, 0.2, 5.0);
        } else {
            const double fac = 0.9 * std::pow(err, -0.2);
            h = hstep * std::clamp(fac, 0.1, 0.9);
            if (h < hmin) return Rk45Status::step_underflow;
        }
    }
    return Rk45Status::completed;
}

}  // namespace rigidform
