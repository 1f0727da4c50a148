#include "ctxaug/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ctxaug {

namespace {

constexpr double kSingularTol = 1e-12;

struct Similarity {
    double scale = 1.0;
    double tx = 0.0;
    double ty = 0.0;
};

Similarity hartley_normalization(const std::array<Point, 4>& pts) {
    double cx = 0.0, cy = 0.0;
    for (const Point& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= 4.0;
    cy /= 4.0;
    double mean_dist = 0.0;
    for (const Point& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
    mean_dist /= 4.0;
    if (mean_dist < kSingularTol)
        throw std::runtime_error("homography_from_4pt: coincident corners");
    const double s = std::sqrt(2.0) / mean_dist;
    return {s, -s * cx, -s * cy};
}

Point apply_similarity(const Similarity& t, Point p) {
    return {t.scale * p.x + t.tx, t.scale * p.y + t.ty};
}

}  // namespace

Homography homography_from_4pt(const FourPointOffsets& offsets) {
    bool all_zero = true;
    for (int i = 0; i < 4; ++i)
        if (offsets.du[i] != 0.0 || offsets.dv[i] != 0.0) all_zero = false;
    if (all_zero) return Homography::identity();

    std::array<Point, 4> src = kUnitCorners;
    std::array<Point, 4> dst;
    for (int i = 0; i < 4; ++i)
        dst[i] = {src[i].x + offsets.du[i], src[i].y + offsets.dv[i]};

    const Similarity t1 = hartley_normalization(src);
    const Similarity t2 = hartley_normalization(dst);

    // 8x8 system for h' with h'_22 = 1, on normalized points.
    std::vector<double> aug(8 * 9, 0.0);
    for (int i = 0; i < 4; ++i) {
        const Point u = apply_similarity(t1, src[i]);
        const Point v = apply_similarity(t2, dst[i]);
        double* r0 = aug.data() + (2 * i) * 9;
        double* r1 = aug.data() + (2 * i + 1) * 9;
        r0[0] = u.x; r0[1] = u.y; r0[2] = 1.0;
        r0[6] = -u.x * v.x; r0[7] = -u.y * v.x; r0[8] = v.x;
        r1[3] = u.x; r1[4] = u.y; r1[5] = 1.0;
        r1[6] = -u.x * v.y; r1[7] = -u.y * v.y; r1[8] = v.y;
    }

    // forward elimination + back substitution
    const int n = 8, w = 9;
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(aug[r * w + col]) > std::fabs(aug[pivot * w + col])) pivot = r;
        if (std::fabs(aug[pivot * w + col]) < kSingularTol)
            throw std::runtime_error("homography_from_4pt: singular system (degenerate corners)");
        if (pivot != col)
            for (int j = 0; j < w; ++j) std::swap(aug[col * w + j], aug[pivot * w + j]);
        for (int r = col + 1; r < n; ++r) {
            const double f = aug[r * w + col] / aug[col * w + col];
            if (f == 0.0) continue;
            for (int j = col; j < w; ++j) aug[r * w + j] -= f * aug[col * w + j];
        }
    }
    std::array<double, 8> hv;
    for (int col = n - 1; col >= 0; --col) {
        double s = aug[col * w + 8];
        for (int j = col + 1; j < n; ++j) s -= aug[col * w + j] * hv[j];
        hv[col] = s / aug[col * w + col];
    }

    Homography hn;
    hn.h = {hv[0], hv[1], hv[2], hv[3], hv[4], hv[5], hv[6], hv[7], 1.0};

    // denormalize: H = T2^{-1} * H' * T1
    Homography t1m, t2inv;
    t1m.h = {t1.scale, 0, t1.tx, 0, t1.scale, t1.ty, 0, 0, 1};
    const double inv_s2 = 1.0 / t2.scale;
    t2inv.h = {inv_s2, 0, -t2.tx * inv_s2, 0, inv_s2, -t2.ty * inv_s2, 0, 0, 1};
    Homography h = compose(compose(t2inv, hn), t1m);

    if (std::fabs(h(2, 2)) < kSingularTol)
        throw std::runtime_error("homography_from_4pt: h22 vanished");
    const double inv = 1.0 / h(2, 2);
    for (double& v : h.h) v *= inv;
    if (std::fabs(determinant(h)) <= kSingularTol)
        throw std::runtime_error("homography_from_4pt: singular homography");

    // residual check: each perturbed corner must reproject exactly
    for (int i = 0; i < 4; ++i) {
        const Point q = warp_point(h, src[i]);
        if (std::hypot(q.x - dst[i].x, q.y - dst[i].y) > 1e-9)
            throw std::runtime_error("homography_from_4pt: residual check failed");
    }
    return h;
}

FourPointOffsets draw_offsets(Rng& rng, double magnitude) {
    FourPointOffsets o;
    for (int i = 0; i < 4; ++i) {
        o.du[i] = rng.uniform(-magnitude, magnitude);
        o.dv[i] = rng.uniform(-magnitude, magnitude);
    }
    return o;
}

Point warp_point(const Homography& h, Point p) {
    const double w = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
    if (std::fabs(w) <= 1e-12)
        throw std::runtime_error("warp_point: point maps to infinity");
    return {(h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2)) / w,
            (h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2)) / w};
}

Point normalize_coords(Point p, double width, double height) {
    if (width <= 0.0 || height <= 0.0)
        throw std::invalid_argument("normalize_coords: non-positive image size");
    return {2.0 * p.x / width - 1.0, 2.0 * p.y / height - 1.0};
}

Point denormalize_coords(Point p, double width, double height) {
    return {(p.x + 1.0) * width / 2.0, (p.y + 1.0) * height / 2.0};
}

Homography compose(const Homography& a, const Homography& b) {
    Homography c;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

double determinant(const Homography& h) {
    return h(0, 0) * (h(1, 1) * h(2, 2) - h(1, 2) * h(2, 1)) -
           h(0, 1) * (h(1, 0) * h(2, 2) - h(1, 2) * h(2, 0)) +
           h(0, 2) * (h(1, 0) * h(2, 1) - h(1, 1) * h(2, 0));
}

Homography invert(const Homography& h) {
    const double det = determinant(h);
    if (std::fabs(det) <= 1e-12) throw std::runtime_error("invert: singular homography");
    const double inv = 1.0 / det;
    Homography r;
    r(0, 0) = (h(1, 1) * h(2, 2) - h(1, 2) * h(2, 1)) * inv;
    r(0, 1) = (h(0, 2) * h(2, 1) - h(0, 1) * h(2, 2)) * inv;
    r(0, 2) = (h(0, 1) * h(1, 2) - h(0, 2) * h(1, 1)) * inv;
    r(1, 0) = (h(1, 2) * h(2, 0) - h(1, 0) * h(2, 2)) * inv;
    r(1, 1) = (h(0, 0) * h(2, 2) - h(0, 2) * h(2, 0)) * inv;
    r(1, 2) = (h(0, 2) * h(1, 0) - h(0, 0) * h(1, 2)) * inv;
    r(2, 0) = (h(1, 0) * h(2, 1) - h(1, 1) * h(2, 0)) * inv;
    r(2, 1) = (h(0, 1) * h(2, 0) - h(0, 0) * h(2, 1)) * inv;
    r(2, 2) = (h(0, 0) * h(1, 1) - h(0, 1) * h(1, 0)) * inv;
    if (std::fabs(r(2, 2)) > 1e-12) {
        const double s = 1.0 / r(2, 2);
        for (double& v : r.h) v *= s;
    }
    return r;
}

Homography pixel_homography(const Homography& normalized, double width, double height) {
    Homography to_norm, to_px;
    to_norm.h = {2.0 / width, 0, -1, 0, 2.0 / height, -1, 0, 0, 1};
    to_px.h = {width / 2.0, 0, width / 2.0, 0, height / 2.0, height / 2.0, 0, 0, 1};
    Homography h = compose(compose(to_px, normalized), to_norm);
    if (std::fabs(h(2, 2)) > 1e-12) {
        const double s = 1.0 / h(2, 2);
        for (double& v : h.h) v *= s;
    }
    return h;
}

std::string homography_to_text(const Homography& h) {
    std::string out;
    char buf[64];
    for (int i = 0; i < 9; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", h.h[i]);
        out += buf;
        out += (i + 1 < 9) ? ' ' : '\n';
    }
    return out;
}

Homography homography_from_text(const std::string& text) {
    std::istringstream is(text);
    Homography h;
    for (int i = 0; i < 9; ++i)
        if (!(is >> h.h[i])) throw std::runtime_error("homography text: expected 9 values");
    return h;
}

}  // namespace ctxaug
