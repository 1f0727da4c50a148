#pragma once

#include <string>
#include <vector>

#include "ctxaug/geometry.hpp"
#include "ctxaug/model.hpp"

namespace ctxaug {

// Regular grid of regional feature vectors anchored to pixel coordinates.
// Cell (r, c) is anchored at ((c + 0.5) * stride, (r + 0.5) * stride).
struct RegionalGrid {
    std::size_t gh = 0;
    std::size_t gw = 0;
    std::size_t depth = 0;
    double stride = 0.0;
    Matrix features;  // (gh * gw) x depth, row-major over cells

    Point anchor(std::size_t cell) const {
        const std::size_t r = cell / gw, c = cell % gw;
        return {(static_cast<double>(c) + 0.5) * stride, (static_cast<double>(r) + 0.5) * stride};
    }
    std::size_t cell_count() const { return gh * gw; }
};

// Grid file: magic "CTXG", u32 gh, u32 gw, u32 d, f32 stride, then
// gh*gw*d little-endian f32 values.
void save_grid_file(const std::string& path, const RegionalGrid& grid);
RegionalGrid load_grid_file(const std::string& path);

// Inverse-distance weighted average over the k nearest cell anchors
// (Euclidean, ties by lowest row-major cell index). A query closer than
// 1e-9 px to its nearest anchor returns that cell's feature exactly.
Matrix interpolate_regional(const RegionalGrid& grid, const Matrix& query_px, std::size_t k = 3);

// reduce(regional) -> concat [reduced || local] -> fuse -> K x 128.
DiffNode* encode_visual_node(const BoundParams& bp, const ModelConfig& cfg, DiffNode* regional,
                             DiffNode* local, RunMode mode, BatchStatsSink* sink = nullptr);

Matrix encode_visual(const ModelParameters& model, const Matrix& regional, const Matrix& local);

}  // namespace ctxaug
