#pragma once

#include <cmath>

namespace terrainprop {

/// Point in the (range, height) plane, metres.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(const Point2&, const Point2&) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

}  // namespace terrainprop
