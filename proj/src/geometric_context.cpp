#include "ctxaug/geometric_context.hpp"

#include <stdexcept>

namespace ctxaug {

DiffNode* matchability_raw_node(const BoundParams& bp, const ModelConfig& cfg, DiffNode* desc) {
    if (desc->value.cols() != cfg.desc_dim)
        throw std::invalid_argument("matchability: descriptor dimension must be " +
                                    std::to_string(cfg.desc_dim));
    return mlp_apply_node(bp, "match", cfg.matchability_spec(), desc, RunMode::Inference);
}

Matrix matchability_raw(const ModelParameters& model, const Matrix& descriptors) {
    Graph g;
    BoundParams bp(g, model.store);
    return matchability_raw_node(bp, model.config, g.constant(descriptors))->value;
}

Matrix matchability(const ModelParameters& model, const Matrix& descriptors) {
    Graph g;
    BoundParams bp(g, model.store);
    DiffNode* raw = matchability_raw_node(bp, model.config, g.constant(descriptors));
    return g.tanh(raw)->value;
}

DiffNode* quad_loss_node(Graph& g, DiffNode* h1_raw, DiffNode* h2_raw,
                         const std::vector<std::size_t>& matchable) {
    if (matchable.size() < 2)
        throw std::invalid_argument("quad_loss: needs at least 2 matchable keypoints");
    const std::size_t km = matchable.size();
    DiffNode* g1 = g.gather_rows(h1_raw, matchable);
    DiffNode* g2 = g.gather_rows(h2_raw, matchable);
    DiffNode* r = g.hadamard(g.row_outer_diff(g1), g.row_outer_diff(g2));
    DiffNode* hinge = g.relu(g.affine(r, -1.0, 1.0));
    Matrix off_diag(km, km, 1.0);
    for (std::size_t i = 0; i < km; ++i) off_diag(i, i) = 0.0;
    DiffNode* masked = g.hadamard_const(hinge, std::move(off_diag));
    const double scale = 1.0 / static_cast<double>(km * (km - 1));
    return g.affine(g.sum_all(masked), scale, 0.0);
}

double quad_loss(const ModelParameters& model, const Matrix& f1, const Matrix& f2,
                 const std::vector<std::size_t>& matchable) {
    if (f1.rows() != f2.rows())
        throw std::invalid_argument("quad_loss: descriptor sets must have equal row counts");
    Graph g;
    BoundParams bp(g, model.store);
    DiffNode* h1 = matchability_raw_node(bp, model.config, g.constant(f1));
    DiffNode* h2 = matchability_raw_node(bp, model.config, g.constant(f2));
    return quad_loss_node(g, h1, h2, matchable)->value(0, 0);
}

namespace {

DiffNode* pre_act_block(const BoundParams& bp, const std::string& prefix, DiffNode* x,
                        RunMode mode, BatchStatsSink* sink) {
    Graph& g = bp.graph();
    DiffNode* t = g.context_norm(x);
    const std::string bn = prefix + ".bn";
    if (mode == RunMode::Train)
        t = g.batch_norm_train(t, bp.node(bn + ".gamma"), bp.node(bn + ".beta"), bn, sink);
    else
        t = g.batch_norm_eval(t, bp.node(bn + ".gamma"), bp.node(bn + ".beta"),
                              bp.raw(bn + ".running_mean"), bp.raw(bn + ".running_var"));
    return g.relu(t);
}

}  // namespace

DiffNode* encode_geometric_node(const BoundParams& bp, const ModelConfig& cfg, DiffNode* coords,
                                DiffNode* match, RunMode mode, BatchStatsSink* sink) {
    if (coords->value.rows() == 0) throw std::invalid_argument("encode_geometric: empty input");
    if (coords->value.cols() != 2)
        throw std::invalid_argument("encode_geometric: coords must be K x 2");
    if (match->value.rows() != coords->value.rows() || match->value.cols() != 1)
        throw std::invalid_argument("encode_geometric: matchability must be K x 1");

    Graph& g = bp.graph();
    DiffNode* in = g.concat_cols(coords, match);
    DiffNode* x = g.add_row_broadcast(g.matmul(in, bp.node("geo.lift.w")), bp.node("geo.lift.b"));

    for (std::size_t u = 0; u < kGeoResidualUnits; ++u) {
        const std::string up = "geo.unit" + std::to_string(u);
        DiffNode* t = pre_act_block(bp, up + ".a", x, mode, sink);
        t = g.add_row_broadcast(g.matmul(t, bp.node(up + ".a.fc.w")), bp.node(up + ".a.fc.b"));
        t = pre_act_block(bp, up + ".b", t, mode, sink);
        t = g.add_row_broadcast(g.matmul(t, bp.node(up + ".b.fc.w")), bp.node(up + ".b.fc.b"));
        x = g.add(x, t);
    }

    DiffNode* t = pre_act_block(bp, "geo.out", x, mode, sink);
    return g.add_row_broadcast(g.matmul(t, bp.node("geo.head.w")), bp.node("geo.head.b"));
}

Matrix encode_geometric(const ModelParameters& model, const Matrix& coords, const Matrix& match) {
    Graph g;
    BoundParams bp(g, model.store);
    return encode_geometric_node(bp, model.config, g.constant(coords), g.constant(match),
                                 RunMode::Inference)
        ->value;
}

}  // namespace ctxaug
