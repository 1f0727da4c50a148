#pragma once

#include <vector>

#include "ctxaug/model.hpp"

namespace ctxaug {

// Raw per-keypoint score H(f), one scalar per descriptor row (K x 1).
DiffNode* matchability_raw_node(const BoundParams& bp, const ModelConfig& cfg, DiffNode* desc);

// tanh(H(f)) per row, values in (-1, 1).
Matrix matchability(const ModelParameters& model, const Matrix& descriptors);
Matrix matchability_raw(const ModelParameters& model, const Matrix& descriptors);

// Quadruple ranking hinge over ordered pairs of matchable indices:
// loss = 1/(Km(Km-1)) * sum_{i != j in Cm} max(0, 1 - R_ij),
// R_ij = (H(f1_i) - H(f1_j)) * (H(f2_i) - H(f2_j)), on raw head outputs.
DiffNode* quad_loss_node(Graph& g, DiffNode* h1_raw, DiffNode* h2_raw,
                         const std::vector<std::size_t>& matchable);

// Throws std::invalid_argument when |Cm| < 2.
double quad_loss(const ModelParameters& model, const Matrix& f1, const Matrix& f2,
                 const std::vector<std::size_t>& matchable);

// Geometric context encoder: linear lift of (x, y, matchability) into
// geo_width channels, four pre-activation residual units
// [CN -> BN -> relu -> perceptron] x2 with identity skip, then a final
// CN -> BN -> relu before the linear head to 128. The closing normalization
// keeps the output invariant to the constant channel shift a global
// coordinate translation induces through the skip connections.
DiffNode* encode_geometric_node(const BoundParams& bp, const ModelConfig& cfg, DiffNode* coords,
                                DiffNode* match, RunMode mode, BatchStatsSink* sink = nullptr);

// coords: K x 2 normalized, match: K x 1 (tanh-activated). Inference mode,
// frozen BN statistics. Throws std::invalid_argument on K = 0.
Matrix encode_geometric(const ModelParameters& model, const Matrix& coords, const Matrix& match);

}  // namespace ctxaug
