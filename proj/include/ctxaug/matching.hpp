#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxaug/scene.hpp"

namespace ctxaug {

struct Match {
    std::size_t query = 0;
    std::size_t reference = 0;
    double nn_distance = 0.0;
    double second_nn_distance = 0.0;
};

using MatchList = std::vector<Match>;

// Exact brute-force nearest neighbor per query row. A match survives iff the
// ratio test passes (when a ratio is given) and, with mutual set, the query is
// also the nearest neighbor of its reference. Ties break to the lowest
// reference index.
MatchList nn_match(const Matrix& query, const Matrix& reference,
                   std::optional<double> ratio = std::nullopt, bool mutual = false);

struct EvalReport {
    std::size_t correspondences = 0;
    std::size_t correct = 0;
    std::size_t putative = 0;
    double recall = 0.0;
    double precision = 0.0;
    bool recall_defined = true;
    bool precision_defined = true;
    double threshold_px = 2.5;

    std::string to_text() const;
    // scene, method, K, ratio, recall, precision, correct, putative, correspondences
    std::string to_csv_row(const std::string& scene, const std::string& method, std::size_t k,
                           std::optional<double> ratio) const;
    static std::string csv_header();
};

// A match (i, j) is correct iff |warp(h, kpA_i) - kpB_j| <= threshold.
// Correspondences counts query keypoints whose warped position lies within
// threshold of any reference keypoint.
EvalReport eval_recall(const MatchList& matches, const KeypointSet& kp_a, const KeypointSet& kp_b,
                       const Homography& h, double threshold_px = 2.5);

struct ScenePool {
    struct Entry {
        const SceneFile* scene;
        const Matrix* desc_a;
        const Matrix* desc_b;
    };
    std::vector<Entry> entries;
};

struct RatioTuneResult {
    double ratio = 1.0;
    bool target_reached = true;
};

// Largest ratio in [0.5, 1.0] whose mean precision over the pool stays at or
// above the target; bisection, 20 iterations. Falls back to 0.5 with a
// warning flag when even that fails.
RatioTuneResult tune_ratio(const ScenePool& pool, double target_precision,
                           double threshold_px = 2.5);

struct DensityPoint {
    std::size_t count = 0;
    EvalReport report;
};

// Uniformly subsamples both views to each count (seeded), then reruns
// nn_match + eval_recall on the subsets.
std::vector<DensityPoint> density_sweep(const SceneFile& scene, const Matrix& desc_a,
                                        const Matrix& desc_b, const std::vector<std::size_t>& counts,
                                        std::uint64_t seed, double threshold_px = 2.5);

// Fraction of the top_n highest-response keypoints in A whose warped position
// lands within threshold of one of the top_n selected keypoints in B.
double repeatability(const std::vector<double>& resp_a, const std::vector<double>& resp_b,
                     const KeypointSet& kp_a, const KeypointSet& kp_b, const Homography& h,
                     std::size_t top_n, double threshold_px);

}  // namespace ctxaug
