#pragma once

#include <string>

#include "ctxaug/model.hpp"
#include "ctxaug/scene.hpp"
#include "ctxaug/trainer.hpp"

namespace ctxaug {

// Line-oriented key=value configuration covering scene generation and
// training. Unknown keys are rejected; '#' starts a comment.
struct RunConfig {
    SceneSpec scene;
    std::size_t scene_count = 16;
    TrainConfig train;
    std::size_t geo_width = 128;
    std::size_t vis_reduce_hidden = 512;
    std::size_t vis_fuse_hidden = 256;
    std::size_t knn_k = 3;

    // Model dimensions follow the scene's descriptor/regional shapes.
    ModelConfig model_config() const;
    void set_seed(std::uint64_t seed);
    void validate() const;

    // Every key with its effective value, canonical order, plus comment lines
    // for the fixed architecture constants.
    std::string effective_text() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace ctxaug
