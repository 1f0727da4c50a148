#pragma once

#include <string>

#include "ctxaug/layers.hpp"

namespace ctxaug {

// Widths of the trainable stack. Descriptor dimensionality is fixed at 128;
// everything else is configurable for small test instances.
struct ModelConfig {
    std::size_t desc_dim = 128;
    std::size_t geo_width = 128;        // channel count of the geometric residual units
    std::size_t vis_depth = 64;         // regional feature depth d
    std::size_t vis_reduce_hidden = 512;
    std::size_t vis_fuse_hidden = 256;

    MlpSpec matchability_spec() const;
    MlpSpec vis_reduce_spec() const;
    MlpSpec vis_fuse_spec() const;
};

constexpr std::size_t kGeoResidualUnits = 4;
constexpr int kModelFormatVersion = 1;

// All trainable weights plus BN running statistics and the softmax
// temperature (stored as the 1x1 parameter "temperature").
struct ModelParameters {
    ModelConfig config;
    ParamStore store;

    double alpha() const { return store.at("temperature")(0, 0); }
    void set_alpha(double a) { store.at("temperature")(0, 0) = a; }
};

ModelParameters make_model(const ModelConfig& config, Rng& rng);

// Model file: magic "CTXP", format-version u32, then name-length-prefixed
// sections each holding one matrix blob. Fixed architecture choices ride
// along as 1x1 "config.*" sections.
void save_model(const std::string& path, const ModelParameters& model);
ModelParameters load_model(const std::string& path);

}  // namespace ctxaug
