#pragma once

#include <array>
#include <string>

#include "ctxaug/rng.hpp"

namespace ctxaug {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// 3x3 projective map, row-major, h[2][2] normalized to 1 after construction.
struct Homography {
    std::array<double, 9> h = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(int r, int c) const { return h[r * 3 + c]; }
    double& operator()(int r, int c) { return h[r * 3 + c]; }

    static Homography identity() { return Homography{}; }
};

// Corner offsets in normalized image coordinates; corners at
// (-1,1), (1,1), (-1,-1), (1,-1). Each offset in (-0.5, 0.5).
struct FourPointOffsets {
    std::array<double, 4> du = {0, 0, 0, 0};
    std::array<double, 4> dv = {0, 0, 0, 0};
};

inline constexpr std::array<Point, 4> kUnitCorners = {
    Point{-1.0, 1.0}, Point{1.0, 1.0}, Point{-1.0, -1.0}, Point{1.0, -1.0}};

// Hartley-normalized DLT on the four perturbed corners. Throws
// std::runtime_error on a degenerate corner configuration.
Homography homography_from_4pt(const FourPointOffsets& offsets);

FourPointOffsets draw_offsets(Rng& rng, double magnitude = 0.5);

// Projective warp. Throws std::runtime_error when |w| <= 1e-12.
Point warp_point(const Homography& h, Point p);

// Pixel coordinates to [-1, 1]^2: x' = 2x/width - 1, y' = 2y/height - 1.
Point normalize_coords(Point p, double width, double height);
Point denormalize_coords(Point p, double width, double height);

Homography compose(const Homography& a, const Homography& b);  // a * b
Homography invert(const Homography& h);
double determinant(const Homography& h);

// Maps A-view pixels to B-view pixels given a homography acting on
// normalized coordinates.
Homography pixel_homography(const Homography& normalized, double width, double height);

// 9 whitespace-separated decimals, row-major.
std::string homography_to_text(const Homography& h);
Homography homography_from_text(const std::string& text);

}  // namespace ctxaug
