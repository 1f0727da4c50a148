#include "ctxaug/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "ctxaug/geometric_context.hpp"
#include "ctxaug/visual_context.hpp"

namespace ctxaug {

void TrainConfig::validate() const {
    if (base_lr <= 0.0 || lr_decay_factor <= 0.0)
        throw std::invalid_argument("train config: rates must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("train config: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (lr_decay_every == 0) throw std::invalid_argument("train config: lr_decay_every must be >= 1");
    if (batch_pairs == 0) throw std::invalid_argument("train config: batch_pairs must be >= 1");
    if (keypoints_per_pair < 4)
        throw std::invalid_argument("train config: keypoints_per_pair must be >= 4");
    if (lambda < 0.0) throw std::invalid_argument("train config: lambda must be >= 0");
}

double lr_at(const TrainConfig& cfg, std::size_t step) {
    const double exponent = static_cast<double>(step) / static_cast<double>(cfg.lr_decay_every);
    return cfg.base_lr * std::pow(cfg.lr_decay_factor, exponent);
}

void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr, double momentum,
              double weight_decay) {
    if (!param.same_shape(grad) || !param.same_shape(velocity))
        throw std::invalid_argument("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity.data()[i] = momentum * velocity.data()[i] + grad.data()[i] +
                             weight_decay * param.data()[i];
        param.data()[i] -= lr * velocity.data()[i];
    }
}

Matrix augment_keypoints(const Matrix& coords, const FourPointOffsets& offsets) {
    if (coords.cols() != 2) throw std::invalid_argument("augment_keypoints: coords must be K x 2");
    const Homography h = homography_from_4pt(offsets);
    Matrix out(coords.rows(), 2);
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        const Point p = warp_point(h, {coords(i, 0), coords(i, 1)});
        out(i, 0) = p.x;
        out(i, 1) = p.y;
    }
    return out;
}

Matrix augment_keypoints(const Matrix& coords, Rng& rng) {
    for (int attempt = 0;; ++attempt) {
        const FourPointOffsets offsets = draw_offsets(rng, 0.5);
        try {
            return augment_keypoints(coords, offsets);
        } catch (const std::runtime_error&) {
            if (attempt >= 10) throw;
        }
    }
}

namespace {

// Draws `want` unused indices from the shuffled pool, falling back to the
// refill sequence when the pool runs dry.
std::vector<std::size_t> take_from(const std::vector<std::size_t>& pool,
                                   std::vector<std::size_t>& refill, std::size_t& refill_cursor,
                                   std::size_t want) {
    std::vector<std::size_t> out;
    out.reserve(want);
    for (std::size_t i = 0; i < pool.size() && out.size() < want; ++i) out.push_back(pool[i]);
    while (out.size() < want) {
        if (refill_cursor >= refill.size())
            throw std::runtime_error("sample_batch: scene keypoint pools exhausted");
        out.push_back(refill[refill_cursor++]);
    }
    return out;
}

}  // namespace

Batch sample_batch(const std::vector<SceneFile>& scenes, const TrainConfig& cfg, Rng& rng) {
    if (scenes.empty()) throw std::invalid_argument("sample_batch: empty scene pool");
    Batch batch;
    for (std::size_t p = 0; p < cfg.batch_pairs; ++p) {
        const std::size_t si = static_cast<std::size_t>(rng.uniform_index(scenes.size()));
        const SceneFile& scene = scenes[si];

        std::vector<std::size_t> m_pool = scene.kp_a.indices_of(KeypointCategory::Matchable);
        if (m_pool.size() < 4)
            throw std::invalid_argument("sample_batch: scene pair has fewer than 4 matchable keypoints");

        const std::size_t k = cfg.keypoints_per_pair;
        const double frac = rng.uniform(0.5, 1.0);
        std::size_t n_m = static_cast<std::size_t>(std::llround(frac * static_cast<double>(k)));
        n_m = std::min(std::max<std::size_t>(n_m, 2), std::min(k, m_pool.size()));
        const std::size_t rem = k - n_m;
        std::size_t n_und = 0;
        for (std::size_t i = 0; i < rem; ++i)
            if (rng.uniform01() < 0.5) ++n_und;
        const std::size_t n_unr = rem - n_und;

        rng.shuffle(m_pool);
        std::vector<std::size_t> a_und = scene.kp_a.indices_of(KeypointCategory::Undiscovered);
        std::vector<std::size_t> a_unr = scene.kp_a.indices_of(KeypointCategory::Unrepeatable);
        std::vector<std::size_t> b_und = scene.kp_b.indices_of(KeypointCategory::Undiscovered);
        std::vector<std::size_t> b_unr = scene.kp_b.indices_of(KeypointCategory::Unrepeatable);
        rng.shuffle(a_und);
        rng.shuffle(a_unr);
        rng.shuffle(b_und);
        rng.shuffle(b_unr);

        PairSample ps;
        ps.scene_index = si;
        for (std::size_t i = 0; i < n_m; ++i) {
            ps.rows_a.push_back(m_pool[i]);
            ps.rows_b.push_back(static_cast<std::size_t>(scene.kp_a.points[m_pool[i]].match_index));
            ps.mask.matchable.push_back(i);
        }

        // refills come from unused matchable keypoints; B-side refills must
        // also avoid the partners the diagonal slots already consumed
        std::vector<std::size_t> a_refill(m_pool.begin() + static_cast<std::ptrdiff_t>(n_m),
                                          m_pool.end());
        std::size_t a_refill_cursor = 0;
        std::vector<std::size_t> b_refill;
        std::unordered_set<std::size_t> used_b(ps.rows_b.begin(), ps.rows_b.end());
        for (std::size_t i = n_m; i < m_pool.size(); ++i) {
            const std::size_t bi =
                static_cast<std::size_t>(scene.kp_a.points[m_pool[i]].match_index);
            if (!used_b.count(bi)) b_refill.push_back(bi);
        }
        std::size_t b_refill_cursor = 0;

        const std::vector<std::size_t> a_und_rows = take_from(a_und, a_refill, a_refill_cursor, n_und);
        const std::vector<std::size_t> a_unr_rows = take_from(a_unr, a_refill, a_refill_cursor, n_unr);
        const std::vector<std::size_t> b_und_rows = take_from(b_und, b_refill, b_refill_cursor, n_und);
        const std::vector<std::size_t> b_unr_rows = take_from(b_unr, b_refill, b_refill_cursor, n_unr);
        for (std::size_t i = 0; i < n_und; ++i) {
            ps.mask.noisy.push_back(ps.rows_a.size());
            ps.rows_a.push_back(a_und_rows[i]);
            ps.rows_b.push_back(b_und_rows[i]);
        }
        for (std::size_t i = 0; i < n_unr; ++i) {
            ps.mask.noisy.push_back(ps.rows_a.size());
            ps.rows_a.push_back(a_unr_rows[i]);
            ps.rows_b.push_back(b_unr_rows[i]);
        }

        const std::size_t slots = ps.rows_a.size();
        ps.coords_a_px = Matrix(slots, 2);
        ps.coords_b_px = Matrix(slots, 2);
        ps.coords_a_norm = Matrix(slots, 2);
        ps.coords_b_norm = Matrix(slots, 2);
        ps.desc_a = Matrix(slots, scene.desc_a.cols());
        ps.desc_b = Matrix(slots, scene.desc_b.cols());
        for (std::size_t t = 0; t < slots; ++t) {
            const Keypoint& ka = scene.kp_a.points[ps.rows_a[t]];
            const Keypoint& kb = scene.kp_b.points[ps.rows_b[t]];
            ps.coords_a_px(t, 0) = ka.x;
            ps.coords_a_px(t, 1) = ka.y;
            ps.coords_b_px(t, 0) = kb.x;
            ps.coords_b_px(t, 1) = kb.y;
            const Point na = normalize_coords({ka.x, ka.y}, scene.kp_a.width, scene.kp_a.height);
            const Point nb = normalize_coords({kb.x, kb.y}, scene.kp_b.width, scene.kp_b.height);
            ps.coords_a_norm(t, 0) = na.x;
            ps.coords_a_norm(t, 1) = na.y;
            ps.coords_b_norm(t, 0) = nb.x;
            ps.coords_b_norm(t, 1) = nb.y;
            for (std::size_t j = 0; j < ps.desc_a.cols(); ++j)
                ps.desc_a(t, j) = scene.desc_a(ps.rows_a[t], j);
            for (std::size_t j = 0; j < ps.desc_b.cols(); ++j)
                ps.desc_b(t, j) = scene.desc_b(ps.rows_b[t], j);
        }
        batch.pairs.push_back(std::move(ps));
    }
    return batch;
}

std::string TrainLog::to_csv() const {
    std::ostringstream os;
    os << "# npair and total are per-matchable-keypoint averages over the batch\n";
    os << "step,lr,total,npair,quad,alpha\n";
    char buf[256];
    for (const TrainLogRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.lr,
                      r.total, r.npair, r.quad, r.alpha);
        os << buf;
    }
    return os.str();
}

void save_train_log(const std::string& path, const TrainLog& log) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << log.to_csv();
}

TrainLog train(const TrainConfig& cfg, const std::vector<SceneFile>& scenes,
               ModelParameters& model) {
    cfg.validate();
    if (scenes.empty()) throw std::invalid_argument("train: empty scene pool");

    std::vector<std::string> update_names;
    std::unordered_map<std::string, Matrix> velocity;
    for (const ParamStore::Param& p : model.store.entries()) {
        if (!p.trainable) continue;
        if (p.name == "temperature" && !cfg.alpha_trainable) continue;
        update_names.push_back(p.name);
        velocity.emplace(p.name, Matrix::zeros(p.value.rows(), p.value.cols()));
    }

    Rng rng(cfg.seed);
    TrainLog log;
    for (std::size_t step = 0; step < cfg.max_steps; ++step) {
        const double lr = lr_at(cfg, step);
        Batch batch = sample_batch(scenes, cfg, rng);

        Graph g;
        BoundParams bp(g, model.store);
        BatchStatsSink sink;
        DiffNode* alpha = bp.node("temperature");

        DiffNode* batch_total = nullptr;
        double npair_logged = 0.0, quad_logged = 0.0;
        for (PairSample& ps : batch.pairs) {
            const Matrix aug_a = augment_keypoints(ps.coords_a_norm, rng);
            const Matrix aug_b = augment_keypoints(ps.coords_b_norm, rng);

            const SceneFile& scene = scenes[ps.scene_index];
            const Matrix reg_a = interpolate_regional(scene.grid_a, ps.coords_a_px, 3);
            const Matrix reg_b = interpolate_regional(scene.grid_b, ps.coords_b_px, 3);

            auto encode_view = [&](const Matrix& desc, const Matrix& aug_coords,
                                   const Matrix& regional, DiffNode** h_raw_out) {
                DiffNode* desc_node = g.constant(desc);
                DiffNode* h_raw = matchability_raw_node(bp, model.config, desc_node);
                *h_raw_out = h_raw;
                DiffNode* m = g.tanh(h_raw);
                DiffNode* geo = encode_geometric_node(bp, model.config, g.constant(aug_coords), m,
                                                      RunMode::Train, &sink);
                DiffNode* vis = encode_visual_node(bp, model.config, g.constant(regional),
                                                   desc_node, RunMode::Train, &sink);
                return aggregate_node(g, desc_node, geo, vis, {true, true});
            };

            DiffNode* h1_raw = nullptr;
            DiffNode* h2_raw = nullptr;
            DiffNode* f1 = encode_view(ps.desc_a, aug_a, reg_a, &h1_raw);
            DiffNode* f2 = encode_view(ps.desc_b, aug_b, reg_b, &h2_raw);

            DiffNode* npair = npair_loss_node(g, f1, f2, alpha, ps.mask);
            DiffNode* quad = quad_loss_node(g, h1_raw, h2_raw, ps.mask.matchable);
            DiffNode* pair_total = g.add(npair, g.affine(quad, cfg.lambda, 0.0));
            batch_total = batch_total ? g.add(batch_total, pair_total) : pair_total;

            npair_logged += npair->value(0, 0) / static_cast<double>(ps.mask.matchable.size());
            quad_logged += quad->value(0, 0);
        }
        batch_total = g.affine(batch_total, 1.0 / static_cast<double>(cfg.batch_pairs), 0.0);
        npair_logged /= static_cast<double>(cfg.batch_pairs);
        quad_logged /= static_cast<double>(cfg.batch_pairs);

        const double total_value = batch_total->value(0, 0);
        if (!std::isfinite(total_value)) {
            std::ostringstream os;
            os << "train: non-finite loss at step " << step << " (scenes:";
            for (const PairSample& ps : batch.pairs) os << ' ' << ps.scene_index;
            os << ", npair=" << npair_logged << ", quad=" << quad_logged
               << ", alpha=" << model.alpha() << ")";
            throw std::runtime_error(os.str());
        }

        g.backward(batch_total);
        for (const std::string& name : update_names) {
            sgd_step(model.store.at(name), bp.node(name)->grad, velocity.at(name), lr,
                     cfg.momentum, cfg.weight_decay);
        }
        if (model.alpha() < 1e-3) model.set_alpha(1e-3);

        for (const BatchStats& bs : sink) {
            Matrix& rm = model.store.at(bs.name + ".running_mean");
            Matrix& rv = model.store.at(bs.name + ".running_var");
            for (std::size_t j = 0; j < rm.cols(); ++j) {
                rm(0, j) = 0.9 * rm(0, j) + 0.1 * bs.mean(0, j);
                rv(0, j) = 0.9 * rv(0, j) + 0.1 * bs.var(0, j);
            }
        }

        log.rows.push_back({step, lr, npair_logged + cfg.lambda * quad_logged, npair_logged,
                            quad_logged, model.alpha()});
    }
    return log;
}

}  // namespace ctxaug
