#pragma once

#include <string>
#include <vector>

#include "ctxaug/losses.hpp"
#include "ctxaug/model.hpp"
#include "ctxaug/scene.hpp"

namespace ctxaug {

struct TrainConfig {
    double base_lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double lr_decay_factor = 0.1;
    std::size_t lr_decay_every = 2000;  // paper scale: 100k
    std::size_t batch_pairs = 2;
    std::size_t keypoints_per_pair = 128;  // paper scale: 1024
    double lambda = 1.0;
    std::uint64_t seed = 0;
    std::size_t max_steps = 500;
    bool alpha_trainable = true;  // ablation flag: frozen alpha keeps the plain loss

    void validate() const;
};

// base_lr * factor^(step / decay_every), continuous exponent
double lr_at(const TrainConfig& cfg, std::size_t step);

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v
void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr, double momentum,
              double weight_decay);

// Warps every (normalized) coordinate row through the 4-point homography.
Matrix augment_keypoints(const Matrix& coords, const FourPointOffsets& offsets);
// Offsets drawn uniformly in (-0.5, 0.5); degenerate draws retried up to 10 times.
Matrix augment_keypoints(const Matrix& coords, Rng& rng);

struct PairSample {
    std::size_t scene_index = 0;
    std::vector<std::size_t> rows_a, rows_b;  // per slot, indices into the scene keypoint lists
    Matrix coords_a_px, coords_b_px;          // K x 2
    Matrix coords_a_norm, coords_b_norm;      // K x 2
    Matrix desc_a, desc_b;                    // K x desc_dim
    CorrespondenceMask mask;                  // slot indices
};

struct Batch {
    std::vector<PairSample> pairs;
};

// Matchable fraction drawn uniformly in [0.5, 1.0]; the remainder splits
// uniformly between undiscovered and unrepeatable slots. Categories short on
// keypoints refill from the matchable pool.
Batch sample_batch(const std::vector<SceneFile>& scenes, const TrainConfig& cfg, Rng& rng);

struct TrainLogRow {
    std::size_t step = 0;
    double lr = 0.0;
    double total = 0.0;  // per-matchable-keypoint average, see TrainLog::to_csv
    double npair = 0.0;
    double quad = 0.0;
    double alpha = 0.0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::string to_csv() const;
};

void save_train_log(const std::string& path, const TrainLog& log);

// One SGD step per iteration: sample batch, augment coordinates, matchability
// -> geometric encoding, interpolation -> visual encoding, aggregation,
// total loss, backward, parameter update (including the temperature), BN
// running-statistic update. Throws std::runtime_error with a batch dump on a
// non-finite loss.
TrainLog train(const TrainConfig& cfg, const std::vector<SceneFile>& scenes,
               ModelParameters& model);

}  // namespace ctxaug
