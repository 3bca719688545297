#pragma once

#include <Eigen/Dense>

namespace rigidform {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Wedge product of two planar vectors: det [a b]. Zero iff a and b are parallel.
inline double wedge(const Vec2& a, const Vec2& b) {
    return a.x() * b.y() - a.y() * b.x();
}

/// Quarter-turn (counterclockwise rotation by pi/2).
inline Mat2 quarter_turn() {
    Mat2 k;
    k << 0.0, -1.0, 1.0, 0.0;
    return k;
}

/// Rotation by angle theta.
inline Mat2 rotation(double theta) {
    Mat2 r;
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

/// Rotation T_q mapping q to (0, |q|). Undefined for q = 0.
inline Mat2 align_rotation(const Vec2& q) {
    const double nq = q.norm();
    Mat2 t;
    t << q.y(), -q.x(), q.x(), q.y();
    return t / nq;
}

/// (v1-v2)'(v3-v4).
inline double polarization(const Vec2& v1, const Vec2& v2, const Vec2& v3, const Vec2& v4) {
    return (v1 - v2).dot(v3 - v4);
}

/// Both sides of the polarization identity: the inner product above and its
/// expansion in squared distances. The two agree up to rounding.
inline std::pair<double, double> polarization_sides(const Vec2& v1, const Vec2& v2,
                                                    const Vec2& v3, const Vec2& v4) {
    const double lhs = polarization(v1, v2, v3, v4);
    const double rhs = 0.5 * ((v3 - v2).squaredNorm() + (v1 - v4).squaredNorm()
                              - (v3 - v1).squaredNorm() - (v2 - v4).squaredNorm());
    return {lhs, rhs};
}

}  // namespace rigidform
