#pragma once

#include <vector>

#include "ctxaug/graph.hpp"
#include "ctxaug/matrix.hpp"

namespace ctxaug {

// Matchable indices get diagonal log terms; noisy indices participate only
// as negatives in the softmax denominators.
struct CorrespondenceMask {
    std::vector<std::size_t> matchable;
    std::vector<std::size_t> noisy;

    static CorrespondenceMask all(std::size_t n) {
        CorrespondenceMask m;
        m.matchable.resize(n);
        for (std::size_t i = 0; i < n; ++i) m.matchable[i] = i;
        return m;
    }
};

struct StreamFlags {
    bool geo = true;
    bool vis = true;
};

// Element-wise sum of the enabled streams followed by row L2-normalization.
// The raw stream is always enabled. Rows that cancel to (near) zero pass
// through as zero rows.
DiffNode* aggregate_node(Graph& g, DiffNode* raw, DiffNode* geo, DiffNode* vis, StreamFlags streams);
Matrix aggregate(const Matrix& raw, const Matrix* geo, const Matrix* vis);

// d_ij = sqrt(2 * clamp(1 - <f1_i, f2_j>, 0, 2)). Rows must be unit norm
// within 1e-6 (contract error otherwise).
Matrix distance_matrix(const Matrix& f1, const Matrix& f2);

// Builds D from feature nodes without the unit-norm contract check; training
// composes through this.
DiffNode* distance_matrix_node(Graph& g, DiffNode* f1, DiffNode* f2);

// N-pair loss with softmax temperature: S = softmax(alpha * (2 - D)) applied
// row-wise and column-wise over the full N x N matrix; the returned scalar is
// -1/2 (sum_{i in Cm} log s^r_ii + sum_{i in Cm} log s^c_ii). Log arguments
// are floored at 1e-30.
DiffNode* npair_loss_from_distances_node(Graph& g, DiffNode* distances, DiffNode* alpha,
                                         const CorrespondenceMask& mask);
DiffNode* npair_loss_node(Graph& g, DiffNode* f1, DiffNode* f2, DiffNode* alpha,
                          const CorrespondenceMask& mask);

double npair_loss(const Matrix& f1, const Matrix& f2, double alpha, const CorrespondenceMask& mask);
double npair_loss_from_distances(const Matrix& distances, double alpha,
                                 const CorrespondenceMask& mask);

// Number of diagonal log terms the masked loss sums over (2 per matchable
// index: one row-wise, one column-wise).
std::size_t npair_diag_term_count(const CorrespondenceMask& mask);

// total = npair + lambda * quad
double total_loss(double npair, double quad, double lambda);

}  // namespace ctxaug
