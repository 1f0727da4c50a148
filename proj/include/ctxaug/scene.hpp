#pragma once

#include <string>
#include <vector>

#include "ctxaug/geometry.hpp"
#include "ctxaug/matrix.hpp"
#include "ctxaug/visual_context.hpp"

namespace ctxaug {

enum class KeypointCategory { Matchable, Undiscovered, Unrepeatable };

const char* category_name(KeypointCategory c);
KeypointCategory category_from_name(const std::string& name);

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    KeypointCategory category = KeypointCategory::Matchable;
    int match_index = -1;  // row in the paired view, matchable only
};

struct KeypointSet {
    std::vector<Keypoint> points;
    double width = 0.0;
    double height = 0.0;

    std::size_t size() const { return points.size(); }
    Matrix coords_px() const;
    Matrix coords_normalized() const;
    std::vector<std::size_t> indices_of(KeypointCategory c) const;
};

struct SceneSpec {
    double image_size = 256.0;          // square images
    std::size_t keypoint_count = 256;
    std::size_t ambiguity_groups = 8;   // groups of near-identical descriptors
    std::size_t ambiguity_group_size = 4;
    double descriptor_noise_sigma = 0.05;
    double undiscovered_fraction = 0.15;
    double unrepeatable_fraction = 0.15;
    double homography_offset = 0.15;    // 4-point offset magnitude, normalized coords
    std::size_t regional_depth = 64;
    std::size_t desc_dim = 128;
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument on a bad spec
};

struct SceneFile {
    SceneSpec spec;
    KeypointSet kp_a, kp_b;
    Matrix desc_a, desc_b;      // K x desc_dim, unit rows
    RegionalGrid grid_a, grid_b;
    Homography h_ab;            // pixel coordinates, view A -> view B
};

SceneFile gen_scene(const SceneSpec& spec);

struct SceneReport {
    std::vector<std::string> violations;
    std::size_t matchable_count = 0;
    std::size_t undiscovered_count = 0;
    std::size_t unrepeatable_count = 0;
    double mean_warp_residual_px = 0.0;

    bool ok() const { return violations.empty(); }
    std::string to_text() const;
};

SceneReport verify_scene(const SceneFile& scene);

// Directory layout: keypoints_{a,b}.csv (x, y, category, match_index),
// desc_{a,b}.ctxm, grid_{a,b}.ctxg, h_ab.txt, spec.txt (key=value lines).
void save_scene(const std::string& dir, const SceneFile& scene);
SceneFile load_scene(const std::string& dir);

}  // namespace ctxaug
