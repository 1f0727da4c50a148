#include "ctxaug/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace ctxaug {

Matrix context_normalize(const Matrix& features) {
    if (features.rows() == 0) throw std::invalid_argument("context_normalize: empty input");
    const std::size_t k = features.rows(), c = features.cols();
    Matrix out(k, c);
    for (std::size_t j = 0; j < c; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < k; ++i) mean += features(i, j);
        mean /= static_cast<double>(k);
        double var = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double d = features(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(k);
        const double inv_std = 1.0 / std::sqrt(var + kCnEpsilon);
        for (std::size_t i = 0; i < k; ++i) out(i, j) = (features(i, j) - mean) * inv_std;
    }
    return out;
}

Matrix l2_normalize_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
        const double norm = std::sqrt(s);
        if (norm > kL2Epsilon)
            for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / norm;
    }
    return out;
}

void MlpSpec::validate() const {
    if (layers.empty()) throw std::invalid_argument("MlpSpec: at least one layer required");
    if (in_dim == 0) throw std::invalid_argument("MlpSpec: input dimension must be positive");
    for (const MlpLayer& l : layers)
        if (l.width == 0) throw std::invalid_argument("MlpSpec: layer widths must be positive");
}

Matrix& ParamStore::add(const std::string& name, Matrix value, bool trainable) {
    if (has(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    index_[name] = params_.size();
    params_.push_back({name, std::move(value), trainable});
    return params_.back().value;
}

Matrix& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return params_[it->second].value;
}

const Matrix& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return params_[it->second].value;
}

bool ParamStore::is_trainable(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
    return params_[it->second].trainable;
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
    return w;
}

namespace {

void add_bn_params(ParamStore& store, const std::string& prefix, std::size_t width) {
    store.add(prefix + ".gamma", Matrix(1, width, 1.0));
    store.add(prefix + ".beta", Matrix(1, width, 0.0));
    store.add(prefix + ".running_mean", Matrix(1, width, 0.0), false);
    store.add(prefix + ".running_var", Matrix(1, width, 1.0), false);
}

}  // namespace

void add_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
    spec.validate();
    std::size_t in = spec.in_dim;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const MlpLayer& layer = spec.layers[l];
        const std::string lp = prefix + ".l" + std::to_string(l);
        store.add(lp + ".w", glorot_uniform(in, layer.width, rng));
        store.add(lp + ".b", Matrix(1, layer.width, 0.0));
        if (layer.norm == NormTag::Bn || layer.norm == NormTag::CnBn)
            add_bn_params(store, lp + ".bn", layer.width);
        in = layer.width;
    }
}

BoundParams::BoundParams(Graph& g, const ParamStore& store) : g_(&g), store_(&store) {
    for (const ParamStore::Param& p : store.entries())
        nodes_[p.name] = g.leaf(p.value, p.trainable);
}

DiffNode* BoundParams::node(const std::string& name) const {
    auto it = nodes_.find(name);
    if (it == nodes_.end()) throw std::out_of_range("BoundParams: unknown parameter " + name);
    return it->second;
}

DiffNode* mlp_apply_node(const BoundParams& bp, const std::string& prefix, const MlpSpec& spec,
                         DiffNode* input, RunMode mode, BatchStatsSink* sink) {
    spec.validate();
    if (input->value.cols() != spec.in_dim)
        throw std::invalid_argument("mlp_apply: input has " + std::to_string(input->value.cols()) +
                                    " columns, spec expects " + std::to_string(spec.in_dim));
    Graph& g = bp.graph();
    DiffNode* x = input;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const MlpLayer& layer = spec.layers[l];
        const std::string lp = prefix + ".l" + std::to_string(l);
        x = g.add_row_broadcast(g.matmul(x, bp.node(lp + ".w")), bp.node(lp + ".b"));
        if (layer.norm == NormTag::Cn || layer.norm == NormTag::CnBn) x = g.context_norm(x);
        if (layer.norm == NormTag::Bn || layer.norm == NormTag::CnBn) {
            const std::string bn = lp + ".bn";
            if (mode == RunMode::Train)
                x = g.batch_norm_train(x, bp.node(bn + ".gamma"), bp.node(bn + ".beta"), bn, sink);
            else
                x = g.batch_norm_eval(x, bp.node(bn + ".gamma"), bp.node(bn + ".beta"),
                                      bp.raw(bn + ".running_mean"), bp.raw(bn + ".running_var"));
        }
        switch (layer.act) {
            case Activation::Relu: x = g.relu(x); break;
            case Activation::Tanh: x = g.tanh(x); break;
            case Activation::None: break;
        }
    }
    return x;
}

Matrix mlp_apply(const MlpSpec& spec, const ParamStore& store, const std::string& prefix,
                 const Matrix& input) {
    Graph g;
    BoundParams bp(g, store);
    return mlp_apply_node(bp, prefix, spec, g.constant(input), RunMode::Inference)->value;
}

GradCheckReport grad_check(ParamStore& store, const LossBuilder& build,
                           const GradCheckOptions& opts) {
    GradCheckReport report;

    // analytic gradients, one backward pass
    std::unordered_map<std::string, Matrix> analytic;
    {
        Graph g;
        BoundParams bp(g, store);
        DiffNode* root = build(g, bp);
        g.backward(root);
        for (const ParamStore::Param& p : store.entries())
            if (p.trainable) analytic.emplace(p.name, bp.node(p.name)->grad);
    }

    auto evaluate = [&]() {
        Graph g;
        BoundParams bp(g, store);
        return build(g, bp)->value(0, 0);
    };

    Rng rng(Rng::derive(opts.seed, 0xc0ffee));
    for (ParamStore::Param& p : store.entries()) {
        if (!p.trainable) continue;
        const std::size_t n = p.value.size();
        std::vector<std::size_t> coords;
        if (opts.max_coords_per_tensor == 0 || n <= opts.max_coords_per_tensor) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            rng.shuffle(all);
            coords.assign(all.begin(), all.begin() + opts.max_coords_per_tensor);
        }

        GradCheckReport::Entry entry;
        entry.param = p.name;
        entry.coords_checked = coords.size();
        const Matrix& a = analytic.at(p.name);
        for (std::size_t c : coords) {
            const double orig = p.value.data()[c];
            p.value.data()[c] = orig + opts.h;
            const double fp = evaluate();
            p.value.data()[c] = orig - opts.h;
            const double fm = evaluate();
            p.value.data()[c] = orig;
            const double numeric = (fp - fm) / (2.0 * opts.h);
            const double denom =
                std::max({std::fabs(a.data()[c]), std::fabs(numeric), opts.denom_floor});
            entry.max_rel_error =
                std::max(entry.max_rel_error, std::fabs(a.data()[c] - numeric) / denom);
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.max_rel_error < opts.tolerance;
    return report;
}

}  // namespace ctxaug
