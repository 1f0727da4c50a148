#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxaug/graph.hpp"
#include "ctxaug/matrix.hpp"
#include "ctxaug/rng.hpp"

namespace ctxaug {

// Per-column standardization across the K points of one instance.
// out(i,c) = (in(i,c) - mu_c) / sqrt(var_c + 1e-6), population variance.
Matrix context_normalize(const Matrix& features);

// Rows with norm > 1e-12 are scaled to unit norm; smaller rows become zero.
Matrix l2_normalize_rows(const Matrix& m);

enum class Activation { None, Relu, Tanh };
enum class NormTag { None, Cn, Bn, CnBn };

struct MlpLayer {
    std::size_t width = 0;
    Activation act = Activation::None;
    NormTag norm = NormTag::None;
};

struct MlpSpec {
    std::size_t in_dim = 0;
    std::vector<MlpLayer> layers;

    void validate() const;
    std::size_t out_dim() const { return layers.back().width; }
};

// Named parameter container. Insertion order is the serialization order.
class ParamStore {
public:
    struct Param {
        std::string name;
        Matrix value;
        bool trainable = true;
    };

    Matrix& add(const std::string& name, Matrix value, bool trainable = true);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool is_trainable(const std::string& name) const;

    std::vector<Param>& entries() { return params_; }
    const std::vector<Param>& entries() const { return params_; }
    std::size_t size() const { return params_.size(); }

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Adds weight/bias (and BN parameters where the norm tag needs them) for each
// layer under `prefix`, Glorot-uniform weights, zero biases.
void add_mlp_params(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng);

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

enum class RunMode { Train, Inference };

// Binds store parameters to graph leaves for one forward/backward pass.
// Trainable parameters get requires_grad; running statistics stay constants.
class BoundParams {
public:
    BoundParams(Graph& g, const ParamStore& store);

    DiffNode* node(const std::string& name) const;
    const Matrix& raw(const std::string& name) const { return store_->at(name); }
    Graph& graph() const { return *g_; }
    const ParamStore& store() const { return *store_; }

private:
    Graph* g_;
    const ParamStore* store_;
    std::unordered_map<std::string, DiffNode*> nodes_;
};

// Sequential per-layer affine map, then the layer's normalization tag, then
// its activation. BN uses batch statistics in Train mode and the stored
// running statistics in Inference mode.
DiffNode* mlp_apply_node(const BoundParams& bp, const std::string& prefix, const MlpSpec& spec,
                         DiffNode* input, RunMode mode, BatchStatsSink* sink = nullptr);

// Inference-mode convenience over a throwaway graph.
Matrix mlp_apply(const MlpSpec& spec, const ParamStore& store, const std::string& prefix,
                 const Matrix& input);

// ---- Gradient checking -----------------------------------------------------

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-4;
    std::size_t max_coords_per_tensor = 8;  // 0 = all coordinates
    double denom_floor = 1e-3;
    std::uint64_t seed = 0;  // drives coordinate sampling
};

struct GradCheckReport {
    struct Entry {
        std::string param;
        double max_rel_error = 0.0;
        std::size_t coords_checked = 0;
    };
    std::vector<Entry> entries;
    double max_rel_error = 0.0;
    bool pass = false;
};

// Compares reverse-mode gradients of the scalar produced by `build` against
// central finite differences on a sampled subset of each trainable tensor's
// coordinates. `build` must construct the loss from the bound parameters and
// must not mutate the store.
using LossBuilder = std::function<DiffNode*(Graph&, const BoundParams&)>;

GradCheckReport grad_check(ParamStore& store, const LossBuilder& build,
                           const GradCheckOptions& opts = {});

}  // namespace ctxaug
