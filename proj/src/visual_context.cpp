#include "ctxaug/visual_context.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ctxaug {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("grid read: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

float read_f32(std::istream& is) {
    std::uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_grid_file(const std::string& path, const RegionalGrid& grid) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write("CTXG", 4);
    write_u32(os, static_cast<std::uint32_t>(grid.gh));
    write_u32(os, static_cast<std::uint32_t>(grid.gw));
    write_u32(os, static_cast<std::uint32_t>(grid.depth));
    write_f32(os, static_cast<float>(grid.stride));
    for (std::size_t i = 0; i < grid.features.size(); ++i)
        write_f32(os, static_cast<float>(grid.features.data()[i]));
}

RegionalGrid load_grid_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CTXG", 4) != 0)
        throw std::runtime_error("grid read: bad magic, expected CTXG");
    RegionalGrid grid;
    grid.gh = read_u32(is);
    grid.gw = read_u32(is);
    grid.depth = read_u32(is);
    grid.stride = static_cast<double>(read_f32(is));
    grid.features = Matrix(grid.gh * grid.gw, grid.depth);
    for (std::size_t i = 0; i < grid.features.size(); ++i)
        grid.features.data()[i] = static_cast<double>(read_f32(is));
    if (!is) throw std::runtime_error("grid read: truncated payload");
    return grid;
}

Matrix interpolate_regional(const RegionalGrid& grid, const Matrix& query_px, std::size_t k) {
    const std::size_t cells = grid.cell_count();
    if (cells == 0) throw std::invalid_argument("interpolate_regional: empty grid");
    if (k < 1 || k > cells)
        throw std::invalid_argument("interpolate_regional: k must be in [1, cell count]");
    if (query_px.cols() != 2)
        throw std::invalid_argument("interpolate_regional: query must be K x 2");

    Matrix out(query_px.rows(), grid.depth);
    std::vector<std::pair<double, std::size_t>> dist(cells);
    for (std::size_t q = 0; q < query_px.rows(); ++q) {
        const Point p{query_px(q, 0), query_px(q, 1)};
        for (std::size_t cell = 0; cell < cells; ++cell) {
            const Point a = grid.anchor(cell);
            dist[cell] = {std::hypot(p.x - a.x, p.y - a.y), cell};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        if (dist[0].first < 1e-9) {
            const double* f = grid.features.row(dist[0].second);
            for (std::size_t d = 0; d < grid.depth; ++d) out(q, d) = f[d];
            continue;
        }
        double wsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double w = 1.0 / dist[j].first;
            wsum += w;
            const double* f = grid.features.row(dist[j].second);
            for (std::size_t d = 0; d < grid.depth; ++d) out(q, d) += w * f[d];
        }
        for (std::size_t d = 0; d < grid.depth; ++d) out(q, d) /= wsum;
    }
    return out;
}

DiffNode* encode_visual_node(const BoundParams& bp, const ModelConfig& cfg, DiffNode* regional,
                             DiffNode* local, RunMode mode, BatchStatsSink* sink) {
    if (regional->value.rows() != local->value.rows())
        throw std::invalid_argument("encode_visual: row count mismatch between regional and local");
    if (local->value.cols() != cfg.desc_dim)
        throw std::invalid_argument("encode_visual: local descriptors must be K x " +
                                    std::to_string(cfg.desc_dim));
    Graph& g = bp.graph();
    DiffNode* reduced = mlp_apply_node(bp, "vis.reduce", cfg.vis_reduce_spec(), regional, mode, sink);
    DiffNode* cat = g.concat_cols(reduced, local);  // [regional || local]
    return mlp_apply_node(bp, "vis.fuse", cfg.vis_fuse_spec(), cat, mode, sink);
}

Matrix encode_visual(const ModelParameters& model, const Matrix& regional, const Matrix& local) {
    Graph g;
    BoundParams bp(g, model.store);
    return encode_visual_node(bp, model.config, g.constant(regional), g.constant(local),
                              RunMode::Inference)
        ->value;
}

}  // namespace ctxaug
