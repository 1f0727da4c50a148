#include "ctxaug/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxaug {

DiffNode* aggregate_node(Graph& g, DiffNode* raw, DiffNode* geo, DiffNode* vis,
                         StreamFlags streams) {
    DiffNode* sum = raw;
    if (streams.geo) {
        if (!geo) throw std::invalid_argument("aggregate: geo stream enabled but missing");
        if (!geo->value.same_shape(raw->value))
            throw std::invalid_argument("aggregate: geo stream shape mismatch");
        sum = g.add(sum, geo);
    }
    if (streams.vis) {
        if (!vis) throw std::invalid_argument("aggregate: vis stream enabled but missing");
        if (!vis->value.same_shape(raw->value))
            throw std::invalid_argument("aggregate: vis stream shape mismatch");
        sum = g.add(sum, vis);
    }
    return g.l2_normalize_rows(sum);
}

Matrix aggregate(const Matrix& raw, const Matrix* geo, const Matrix* vis) {
    Graph g;
    DiffNode* r = g.constant(raw);
    DiffNode* ge = geo ? g.constant(*geo) : nullptr;
    DiffNode* vi = vis ? g.constant(*vis) : nullptr;
    return aggregate_node(g, r, ge, vi, {geo != nullptr, vis != nullptr})->value;
}

Matrix distance_matrix(const Matrix& f1, const Matrix& f2) {
    if (f1.cols() != f2.cols())
        throw std::invalid_argument("distance_matrix: feature dimensions differ");
    auto check_unit = [](const Matrix& f, const char* which) {
        for (std::size_t i = 0; i < f.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < f.cols(); ++j) s += f(i, j) * f(i, j);
            if (std::fabs(std::sqrt(s) - 1.0) > 1e-6)
                throw std::invalid_argument(std::string("distance_matrix: ") + which + " row " +
                                            std::to_string(i) + " is not unit norm");
        }
    };
    check_unit(f1, "f1");
    check_unit(f2, "f2");
    Graph g;
    return distance_matrix_node(g, g.constant(f1), g.constant(f2))->value;
}

DiffNode* distance_matrix_node(Graph& g, DiffNode* f1, DiffNode* f2) {
    DiffNode* dots = g.matmul(f1, g.transpose(f2));
    DiffNode* c = g.clamp(g.affine(dots, -1.0, 1.0), 0.0, 2.0);
    return g.sqrt_guarded(g.affine(c, 2.0, 0.0));
}

DiffNode* npair_loss_from_distances_node(Graph& g, DiffNode* distances, DiffNode* alpha,
                                         const CorrespondenceMask& mask) {
    if (mask.matchable.empty())
        throw std::invalid_argument("npair_loss: matchable index set must be nonempty");
    if (distances->value.rows() != distances->value.cols())
        throw std::invalid_argument("npair_loss: distance matrix must be square");
    DiffNode* logits = g.scale_by(g.affine(distances, -1.0, 2.0), alpha);
    DiffNode* row_terms = g.masked_diag_sum(g.log_floored(g.softmax_rows(logits)), mask.matchable);
    DiffNode* col_terms = g.masked_diag_sum(g.log_floored(g.softmax_cols(logits)), mask.matchable);
    return g.affine(g.add(row_terms, col_terms), -0.5, 0.0);
}

DiffNode* npair_loss_node(Graph& g, DiffNode* f1, DiffNode* f2, DiffNode* alpha,
                          const CorrespondenceMask& mask) {
    if (f1->value.rows() != f2->value.rows())
        throw std::invalid_argument("npair_loss: feature sets must have equal row counts");
    return npair_loss_from_distances_node(g, distance_matrix_node(g, f1, f2), alpha, mask);
}

double npair_loss(const Matrix& f1, const Matrix& f2, double alpha,
                  const CorrespondenceMask& mask) {
    Graph g;
    Matrix a(1, 1);
    a(0, 0) = alpha;
    return npair_loss_node(g, g.constant(f1), g.constant(f2), g.constant(a), mask)->value(0, 0);
}

double npair_loss_from_distances(const Matrix& distances, double alpha,
                                 const CorrespondenceMask& mask) {
    Graph g;
    Matrix a(1, 1);
    a(0, 0) = alpha;
    return npair_loss_from_distances_node(g, g.constant(distances), g.constant(a), mask)
        ->value(0, 0);
}

std::size_t npair_diag_term_count(const CorrespondenceMask& mask) {
    return 2 * mask.matchable.size();
}

double total_loss(double npair, double quad, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be non-negative");
    return npair + lambda * quad;
}

}  // namespace ctxaug
