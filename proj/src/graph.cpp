#include "ctxaug/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctxaug {

DiffNode* Graph::make(Matrix value, std::vector<DiffNode*> parents,
                      std::function<void(DiffNode&)> backprop) {
    auto node = std::make_unique<DiffNode>();
    node->value = std::move(value);
    node->grad = Matrix::zeros(node->value.rows(), node->value.cols());
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
    node->index = nodes_.size();
    for (DiffNode* p : node->parents) {
        if (p->requires_grad) {
            node->requires_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

DiffNode* Graph::leaf(Matrix value, bool requires_grad) {
    DiffNode* n = make(std::move(value), {}, nullptr);
    n->requires_grad = requires_grad;
    return n;
}

DiffNode* Graph::add(DiffNode* a, DiffNode* b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b->value.data()[i];
    return make(std::move(out), {a, b}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            n.parents[0]->grad.data()[i] += n.grad.data()[i];
            n.parents[1]->grad.data()[i] += n.grad.data()[i];
        }
    });
}

DiffNode* Graph::sub(DiffNode* a, DiffNode* b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("sub: shape mismatch");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b->value.data()[i];
    return make(std::move(out), {a, b}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            n.parents[0]->grad.data()[i] += n.grad.data()[i];
            n.parents[1]->grad.data()[i] -= n.grad.data()[i];
        }
    });
}

DiffNode* Graph::affine(DiffNode* x, double a, double b) {
    Matrix out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a * out.data()[i] + b;
    return make(std::move(out), {x}, [a](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad.data()[i] += a * n.grad.data()[i];
    });
}

DiffNode* Graph::hadamard(DiffNode* a, DiffNode* b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("hadamard: shape mismatch");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b->value.data()[i];
    return make(std::move(out), {a, b}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            n.parents[0]->grad.data()[i] += n.grad.data()[i] * n.parents[1]->value.data()[i];
            n.parents[1]->grad.data()[i] += n.grad.data()[i] * n.parents[0]->value.data()[i];
        }
    });
}

DiffNode* Graph::hadamard_const(DiffNode* a, Matrix m) {
    if (!a->value.same_shape(m)) throw std::invalid_argument("hadamard_const: shape mismatch");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= m.data()[i];
    auto mask = std::make_shared<Matrix>(std::move(m));
    return make(std::move(out), {a}, [mask](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            n.parents[0]->grad.data()[i] += n.grad.data()[i] * mask->data()[i];
    });
}

DiffNode* Graph::scale_by(DiffNode* x, DiffNode* scalar) {
    if (scalar->value.size() != 1) throw std::invalid_argument("scale_by: scalar node must be 1x1");
    const double s = scalar->value.data()[0];
    Matrix out = x->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= s;
    return make(std::move(out), {x, scalar}, [s](DiffNode& n) {
        double ds = 0.0;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            n.parents[0]->grad.data()[i] += s * n.grad.data()[i];
            ds += n.grad.data()[i] * n.parents[0]->value.data()[i];
        }
        n.parents[1]->grad.data()[0] += ds;
    });
}

DiffNode* Graph::matmul(DiffNode* a, DiffNode* b) {
    Matrix out = ctxaug::matmul(a->value, b->value);
    return make(std::move(out), {a, b}, [](DiffNode& n) {
        // dA += G * B^T, dB += A^T * G
        const Matrix& g = n.grad;
        const Matrix& av = n.parents[0]->value;
        const Matrix& bv = n.parents[1]->value;
        Matrix& da = n.parents[0]->grad;
        Matrix& db = n.parents[1]->grad;
        const std::size_t m = bv.cols(), k = av.cols();
        for (std::size_t i = 0; i < av.rows(); ++i) {
            const double* gi = g.row(i);
            double* dai = da.row(i);
            for (std::size_t p = 0; p < k; ++p) {
                const double* bp = bv.row(p);
                double dot = 0.0;
                for (std::size_t j = 0; j < m; ++j) dot += gi[j] * bp[j];
                dai[p] += dot;
            }
            const double* ai = av.row(i);
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = ai[p];
                if (aip == 0.0) continue;
                double* dbp = db.row(p);
                for (std::size_t j = 0; j < m; ++j) dbp[j] += aip * gi[j];
            }
        }
    });
}

DiffNode* Graph::transpose(DiffNode* a) {
    return make(ctxaug::transpose(a->value), {a}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.rows(); ++i)
            for (std::size_t j = 0; j < n.grad.cols(); ++j)
                n.parents[0]->grad(j, i) += n.grad(i, j);
    });
}

DiffNode* Graph::add_row_broadcast(DiffNode* a, DiffNode* bias) {
    if (bias->value.rows() != 1 || bias->value.cols() != a->value.cols())
        throw std::invalid_argument("add_row_broadcast: bias must be 1 x cols(a)");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias->value(0, j);
    return make(std::move(out), {a, bias}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.rows(); ++i)
            for (std::size_t j = 0; j < n.grad.cols(); ++j) {
                n.parents[0]->grad(i, j) += n.grad(i, j);
                n.parents[1]->grad(0, j) += n.grad(i, j);
            }
    });
}

DiffNode* Graph::relu(DiffNode* a) {
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(0.0, out.data()[i]);
    return make(std::move(out), {a}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (n.parents[0]->value.data()[i] > 0.0)
                n.parents[0]->grad.data()[i] += n.grad.data()[i];
    });
}

DiffNode* Graph::tanh(DiffNode* a) {
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
    return make(std::move(out), {a}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double y = n.value.data()[i];
            n.parents[0]->grad.data()[i] += n.grad.data()[i] * (1.0 - y * y);
        }
    });
}

DiffNode* Graph::clamp(DiffNode* a, double lo, double hi) {
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = std::min(hi, std::max(lo, out.data()[i]));
    return make(std::move(out), {a}, [lo, hi](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = n.parents[0]->value.data()[i];
            if (x > lo && x < hi) n.parents[0]->grad.data()[i] += n.grad.data()[i];
        }
    });
}

DiffNode* Graph::sqrt_guarded(DiffNode* a) {
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = out.data()[i] > 0.0 ? std::sqrt(out.data()[i]) : 0.0;
    return make(std::move(out), {a}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = n.parents[0]->value.data()[i];
            if (x > 0.0) n.parents[0]->grad.data()[i] += n.grad.data()[i] * 0.5 / n.value.data()[i];
        }
    });
}

DiffNode* Graph::log_floored(DiffNode* a) {
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log(std::max(out.data()[i], kLogFloor));
    return make(std::move(out), {a}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = n.parents[0]->value.data()[i];
            if (x > kLogFloor) n.parents[0]->grad.data()[i] += n.grad.data()[i] / x;
        }
    });
}

namespace {

// Shared forward for the standardization used by CN and train-mode BN.
// Returns x_hat; fills per-column mean and 1/sqrt(var + eps).
Matrix standardize_cols(const Matrix& x, Matrix* mean_out, Matrix* inv_std_out, Matrix* var_out) {
    const std::size_t k = x.rows(), c = x.cols();
    Matrix mean(1, c), var(1, c), inv_std(1, c);
    for (std::size_t j = 0; j < c; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < k; ++i) m += x(i, j);
        m /= static_cast<double>(k);
        double v = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double d = x(i, j) - m;
            v += d * d;
        }
        v /= static_cast<double>(k);
        mean(0, j) = m;
        var(0, j) = v;
        inv_std(0, j) = 1.0 / std::sqrt(v + kCnEpsilon);
    }
    Matrix xhat(k, c);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < c; ++j) xhat(i, j) = (x(i, j) - mean(0, j)) * inv_std(0, j);
    if (mean_out) *mean_out = std::move(mean);
    if (inv_std_out) *inv_std_out = inv_std;
    if (var_out) *var_out = std::move(var);
    return xhat;
}

// dL/dx for y = (x - mu) / sqrt(var + eps):
// dx_i = inv_std * (g_i - mean(g) - y_i * mean(g .* y)), means over rows per column.
void standardize_backward(const Matrix& g, const Matrix& y, const Matrix& inv_std, Matrix& dx) {
    const std::size_t k = g.rows(), c = g.cols();
    for (std::size_t j = 0; j < c; ++j) {
        double gm = 0.0, gym = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            gm += g(i, j);
            gym += g(i, j) * y(i, j);
        }
        gm /= static_cast<double>(k);
        gym /= static_cast<double>(k);
        const double is = inv_std(0, j);
        for (std::size_t i = 0; i < k; ++i)
            dx(i, j) += is * (g(i, j) - gm - y(i, j) * gym);
    }
}

}  // namespace

DiffNode* Graph::context_norm(DiffNode* a) {
    if (a->value.rows() == 0) throw std::invalid_argument("context_norm: empty input");
    auto inv_std = std::make_shared<Matrix>();
    Matrix out = standardize_cols(a->value, nullptr, inv_std.get(), nullptr);
    return make(std::move(out), {a}, [inv_std](DiffNode& n) {
        standardize_backward(n.grad, n.value, *inv_std, n.parents[0]->grad);
    });
}

DiffNode* Graph::batch_norm_train(DiffNode* a, DiffNode* gamma, DiffNode* beta,
                                  const std::string& stats_name, BatchStatsSink* sink) {
    const std::size_t c = a->value.cols();
    if (gamma->value.rows() != 1 || gamma->value.cols() != c || beta->value.rows() != 1 ||
        beta->value.cols() != c)
        throw std::invalid_argument("batch_norm_train: gamma/beta must be 1 x cols");
    auto inv_std = std::make_shared<Matrix>();
    Matrix mean, var;
    auto xhat = std::make_shared<Matrix>(standardize_cols(a->value, &mean, inv_std.get(), &var));
    if (sink) sink->push_back({stats_name, mean, var});
    Matrix out(a->value.rows(), c);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j)
            out(i, j) = gamma->value(0, j) * (*xhat)(i, j) + beta->value(0, j);
    return make(std::move(out), {a, gamma, beta}, [inv_std, xhat](DiffNode& n) {
        const Matrix& g = n.grad;
        const Matrix& gam = n.parents[1]->value;
        const std::size_t k = g.rows(), c2 = g.cols();
        // dgamma, dbeta, then route gamma-scaled gradient through the standardization
        Matrix gx(k, c2);
        for (std::size_t j = 0; j < c2; ++j) {
            double dg = 0.0, db = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                dg += g(i, j) * (*xhat)(i, j);
                db += g(i, j);
                gx(i, j) = g(i, j) * gam(0, j);
            }
            n.parents[1]->grad(0, j) += dg;
            n.parents[2]->grad(0, j) += db;
        }
        standardize_backward(gx, *xhat, *inv_std, n.parents[0]->grad);
    });
}

DiffNode* Graph::batch_norm_eval(DiffNode* a, DiffNode* gamma, DiffNode* beta,
                                 const Matrix& running_mean, const Matrix& running_var) {
    const std::size_t c = a->value.cols();
    auto scale = std::make_shared<Matrix>(1, c);
    auto xhat = std::make_shared<Matrix>(a->value.rows(), c);
    for (std::size_t j = 0; j < c; ++j)
        (*scale)(0, j) = 1.0 / std::sqrt(running_var(0, j) + kCnEpsilon);
    Matrix out(a->value.rows(), c);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) {
            (*xhat)(i, j) = (a->value(i, j) - running_mean(0, j)) * (*scale)(0, j);
            out(i, j) = gamma->value(0, j) * (*xhat)(i, j) + beta->value(0, j);
        }
    return make(std::move(out), {a, gamma, beta}, [scale, xhat](DiffNode& n) {
        const Matrix& g = n.grad;
        const Matrix& gam = n.parents[1]->value;
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) {
                n.parents[0]->grad(i, j) += g(i, j) * gam(0, j) * (*scale)(0, j);
                n.parents[1]->grad(0, j) += g(i, j) * (*xhat)(i, j);
                n.parents[2]->grad(0, j) += g(i, j);
            }
    });
}

DiffNode* Graph::l2_normalize_rows(DiffNode* a) {
    const std::size_t k = a->value.rows(), c = a->value.cols();
    auto norms = std::make_shared<std::vector<double>>(k);
    Matrix out(k, c);
    for (std::size_t i = 0; i < k; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += a->value(i, j) * a->value(i, j);
        const double norm = std::sqrt(s);
        (*norms)[i] = norm;
        if (norm > kL2Epsilon)
            for (std::size_t j = 0; j < c; ++j) out(i, j) = a->value(i, j) / norm;
        // rows at or below the threshold stay zero
    }
    return make(std::move(out), {a}, [norms](DiffNode& n) {
        const std::size_t c2 = n.value.cols();
        for (std::size_t i = 0; i < n.value.rows(); ++i) {
            const double norm = (*norms)[i];
            if (norm <= kL2Epsilon) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < c2; ++j) dot += n.grad(i, j) * n.value(i, j);
            for (std::size_t j = 0; j < c2; ++j)
                n.parents[0]->grad(i, j) += (n.grad(i, j) - n.value(i, j) * dot) / norm;
        }
    });
}

namespace {

void softmax_inplace(double* v, std::size_t n, std::size_t stride) {
    double mx = v[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i * stride]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        v[i * stride] = std::exp(v[i * stride] - mx);
        sum += v[i * stride];
    }
    for (std::size_t i = 0; i < n; ++i) v[i * stride] /= sum;
}

void softmax_backward_line(const double* g, const double* y, double* dx, std::size_t n,
                           std::size_t stride) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += g[i * stride] * y[i * stride];
    for (std::size_t i = 0; i < n; ++i) dx[i * stride] += y[i * stride] * (g[i * stride] - dot);
}

}  // namespace

DiffNode* Graph::softmax_rows(DiffNode* a) {
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i), out.cols(), 1);
    return make(std::move(out), {a}, [](DiffNode& n) {
        for (std::size_t i = 0; i < n.value.rows(); ++i)
            softmax_backward_line(n.grad.row(i), n.value.row(i), n.parents[0]->grad.row(i),
                                  n.value.cols(), 1);
    });
}

DiffNode* Graph::softmax_cols(DiffNode* a) {
    Matrix out = a->value;
    for (std::size_t j = 0; j < out.cols(); ++j)
        softmax_inplace(out.data() + j, out.rows(), out.cols());
    return make(std::move(out), {a}, [](DiffNode& n) {
        for (std::size_t j = 0; j < n.value.cols(); ++j)
            softmax_backward_line(n.grad.data() + j, n.value.data() + j,
                                  n.parents[0]->grad.data() + j, n.value.rows(), n.value.cols());
    });
}

DiffNode* Graph::gather_rows(DiffNode* a, std::vector<std::size_t> indices) {
    Matrix out(indices.size(), a->value.cols());
    for (std::size_t t = 0; t < indices.size(); ++t) {
        if (indices[t] >= a->value.rows()) throw std::invalid_argument("gather_rows: index out of range");
        for (std::size_t j = 0; j < out.cols(); ++j) out(t, j) = a->value(indices[t], j);
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    return make(std::move(out), {a}, [idx](DiffNode& n) {
        for (std::size_t t = 0; t < idx->size(); ++t)
            for (std::size_t j = 0; j < n.value.cols(); ++j)
                n.parents[0]->grad((*idx)[t], j) += n.grad(t, j);
    });
}

DiffNode* Graph::concat_cols(DiffNode* a, DiffNode* b) {
    if (a->value.rows() != b->value.rows())
        throw std::invalid_argument("concat_cols: row count mismatch");
    const std::size_t ca = a->value.cols(), cb = b->value.cols();
    Matrix out(a->value.rows(), ca + cb);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < ca; ++j) out(i, j) = a->value(i, j);
        for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b->value(i, j);
    }
    return make(std::move(out), {a, b}, [ca, cb](DiffNode& n) {
        for (std::size_t i = 0; i < n.value.rows(); ++i) {
            for (std::size_t j = 0; j < ca; ++j) n.parents[0]->grad(i, j) += n.grad(i, j);
            for (std::size_t j = 0; j < cb; ++j) n.parents[1]->grad(i, j) += n.grad(i, ca + j);
        }
    });
}

DiffNode* Graph::row_outer_diff(DiffNode* v) {
    if (v->value.cols() != 1) throw std::invalid_argument("row_outer_diff: input must be K x 1");
    const std::size_t k = v->value.rows();
    Matrix out(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) out(i, j) = v->value(i, 0) - v->value(j, 0);
    return make(std::move(out), {v}, [k](DiffNode& n) {
        for (std::size_t i = 0; i < k; ++i) {
            double rs = 0.0, cs = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                rs += n.grad(i, j);
                cs += n.grad(j, i);
            }
            n.parents[0]->grad(i, 0) += rs - cs;
        }
    });
}

DiffNode* Graph::sum_all(DiffNode* a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value.data()[i];
    Matrix out(1, 1);
    out(0, 0) = s;
    return make(std::move(out), {a}, [](DiffNode& n) {
        const double g = n.grad(0, 0);
        for (std::size_t i = 0; i < n.parents[0]->grad.size(); ++i)
            n.parents[0]->grad.data()[i] += g;
    });
}

DiffNode* Graph::masked_diag_sum(DiffNode* a, std::vector<std::size_t> indices) {
    double s = 0.0;
    for (std::size_t i : indices) {
        if (i >= a->value.rows() || i >= a->value.cols())
            throw std::invalid_argument("masked_diag_sum: index out of range");
        s += a->value(i, i);
    }
    Matrix out(1, 1);
    out(0, 0) = s;
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    return make(std::move(out), {a}, [idx](DiffNode& n) {
        const double g = n.grad(0, 0);
        for (std::size_t i : *idx) n.parents[0]->grad(i, i) += g;
    });
}

void Graph::backward(DiffNode* root) {
    if (root->value.rows() != 1 || root->value.cols() != 1)
        throw std::invalid_argument("backward: root must be scalar (1x1)");
    zero_grads();
    root->grad(0, 0) = 1.0;
    for (std::size_t i = root->index + 1; i-- > 0;) {
        DiffNode& n = *nodes_[i];
        if (n.backprop && n.requires_grad) n.backprop(n);
    }
}

void Graph::zero_grads() {
    for (auto& n : nodes_) n->grad = Matrix::zeros(n->value.rows(), n->value.cols());
}

std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_gradient: h must be positive");
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace ctxaug
