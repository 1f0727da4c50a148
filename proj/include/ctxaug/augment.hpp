#pragma once

#include "ctxaug/model.hpp"
#include "ctxaug/scene.hpp"

namespace ctxaug {

struct AugmentStreams {
    bool geo = true;
    bool vis = true;

    static AugmentStreams raw_only() { return {false, false}; }
    static AugmentStreams geo_only() { return {true, false}; }
    static AugmentStreams vis_only() { return {false, true}; }
    static AugmentStreams both() { return {true, true}; }
};

// Inference-time descriptor augmentation for one view: matchability from the
// raw descriptors, geometric encoding of the (normalized) keypoint layout,
// interpolated regional features through the visual encoder, stream sum,
// L2 normalization. With no context stream enabled the raw descriptors pass
// through unchanged.
Matrix augment_descriptors(const ModelParameters& model, const KeypointSet& keypoints,
                           const Matrix& descriptors, const RegionalGrid& grid,
                           AugmentStreams streams, std::size_t knn_k = 3);

}  // namespace ctxaug
