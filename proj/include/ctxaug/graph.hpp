#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctxaug/matrix.hpp"

namespace ctxaug {

// Reverse-mode differentiation node. Values are computed eagerly at node
// creation (define-by-run tape); gradients are filled by Graph::backward.
struct DiffNode {
    Matrix value;
    Matrix grad;  // same shape as value, zero until backward
    std::vector<DiffNode*> parents;
    std::function<void(DiffNode&)> backprop;  // accumulates into parents' grad
    bool requires_grad = false;
    std::size_t index = 0;  // creation order; creation order is topological
};

constexpr double kCnEpsilon = 1e-6;    // variance stabilizer in context/batch norm
constexpr double kL2Epsilon = 1e-12;   // rows at or below this norm pass through as zero
constexpr double kLogFloor = 1e-30;    // floor for log arguments

// Collects per-batch normalization statistics during training-mode forwards so
// the trainer can update running statistics after the step. Forward passes
// themselves stay side-effect free.
struct BatchStats {
    std::string name;  // parameter prefix of the BN layer, e.g. "geo.unit0.a.bn"
    Matrix mean;       // 1 x C
    Matrix var;        // 1 x C, population variance
};
using BatchStatsSink = std::vector<BatchStats>;

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    DiffNode* leaf(Matrix value, bool requires_grad = false);
    DiffNode* constant(Matrix value) { return leaf(std::move(value), false); }

    DiffNode* add(DiffNode* a, DiffNode* b);
    DiffNode* sub(DiffNode* a, DiffNode* b);
    // elementwise a*x + b with scalar constants
    DiffNode* affine(DiffNode* x, double a, double b);
    DiffNode* hadamard(DiffNode* a, DiffNode* b);
    DiffNode* hadamard_const(DiffNode* a, Matrix m);
    // x scaled elementwise by a 1x1 node
    DiffNode* scale_by(DiffNode* x, DiffNode* scalar);
    DiffNode* matmul(DiffNode* a, DiffNode* b);
    DiffNode* transpose(DiffNode* a);
    // bias is 1 x C, broadcast over the rows of a (K x C)
    DiffNode* add_row_broadcast(DiffNode* a, DiffNode* bias);
    DiffNode* relu(DiffNode* a);
    DiffNode* tanh(DiffNode* a);
    DiffNode* clamp(DiffNode* a, double lo, double hi);
    // sqrt with zero gradient at x <= 0 (clamped-to-zero inputs stay constant)
    DiffNode* sqrt_guarded(DiffNode* a);
    DiffNode* log_floored(DiffNode* a);
    // per-column standardization over rows, epsilon-regularized population variance
    DiffNode* context_norm(DiffNode* a);
    // batch norm, training mode: per-batch column statistics; gamma/beta are 1 x C
    DiffNode* batch_norm_train(DiffNode* a, DiffNode* gamma, DiffNode* beta,
                               const std::string& stats_name = {},
                               BatchStatsSink* sink = nullptr);
    // batch norm, inference mode: frozen running statistics
    DiffNode* batch_norm_eval(DiffNode* a, DiffNode* gamma, DiffNode* beta,
                              const Matrix& running_mean, const Matrix& running_var);
    DiffNode* l2_normalize_rows(DiffNode* a);
    DiffNode* softmax_rows(DiffNode* a);
    DiffNode* softmax_cols(DiffNode* a);
    DiffNode* gather_rows(DiffNode* a, std::vector<std::size_t> indices);
    DiffNode* concat_cols(DiffNode* a, DiffNode* b);
    // v is K x 1; output is K x K with out(i,j) = v(i) - v(j)
    DiffNode* row_outer_diff(DiffNode* v);
    DiffNode* sum_all(DiffNode* a);
    // sum of diagonal entries a(i,i) over the index set
    DiffNode* masked_diag_sum(DiffNode* a, std::vector<std::size_t> indices);

    // Zeroes all gradients, then accumulates d(root)/d(node) for every node
    // reachable from root. root must be 1x1.
    void backward(DiffNode* root);
    void zero_grads();

    std::size_t node_count() const { return nodes_.size(); }

private:
    DiffNode* make(Matrix value, std::vector<DiffNode*> parents,
                   std::function<void(DiffNode&)> backprop);
    std::vector<std::unique_ptr<DiffNode>> nodes_;
};

// Central-difference gradient estimate, (f(x + h e_i) - f(x - h e_i)) / (2h).
std::vector<double> finite_diff_gradient(const std::function<double(const std::vector<double>&)>& f,
                                         std::vector<double> x, double h);

}  // namespace ctxaug
