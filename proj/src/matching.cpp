#include "ctxaug/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ctxaug/rng.hpp"

namespace ctxaug {

namespace {

double row_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    const double* ra = a.row(i);
    const double* rb = b.row(j);
    for (std::size_t c = 0; c < a.cols(); ++c) {
        const double d = ra[c] - rb[c];
        s += d * d;
    }
    return std::sqrt(s);
}

// nearest row of `set` to row q of `from`; ties to the lowest index
std::size_t nearest_row(const Matrix& from, std::size_t q, const Matrix& set) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < set.rows(); ++j) {
        const double d = row_distance(from, q, set, j);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

}  // namespace

MatchList nn_match(const Matrix& query, const Matrix& reference, std::optional<double> ratio,
                   bool mutual) {
    if (query.rows() == 0 || reference.rows() == 0)
        throw std::invalid_argument("nn_match: empty input");
    if (query.cols() != reference.cols())
        throw std::invalid_argument("nn_match: descriptor dimensions differ");
    if (ratio && reference.rows() < 2)
        throw std::invalid_argument("nn_match: ratio test needs at least 2 reference rows");

    MatchList matches;
    for (std::size_t q = 0; q < query.rows(); ++q) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        double second_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < reference.rows(); ++j) {
            const double d = row_distance(query, q, reference, j);
            if (d < best_d) {
                second_d = best_d;
                best_d = d;
                best = j;
            } else if (d < second_d) {
                second_d = d;
            }
        }
        if (ratio) {
            const double r = second_d > 0.0 ? best_d / second_d : 1.0;
            if (r > *ratio) continue;
        }
        if (mutual && nearest_row(reference, best, query) != q) continue;
        matches.push_back({q, best, best_d,
                           reference.rows() > 1 ? second_d : std::numeric_limits<double>::infinity()});
    }
    return matches;
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "correspondences=" << correspondences << "\n"
       << "correct=" << correct << "\n"
       << "putative=" << putative << "\n"
       << "recall=" << (recall_defined ? std::to_string(recall) : std::string("undefined")) << "\n"
       << "precision=" << (precision_defined ? std::to_string(precision) : std::string("undefined"))
       << "\n"
       << "threshold_px=" << threshold_px << "\n";
    return os.str();
}

std::string EvalReport::csv_header() {
    return "scene,method,K,ratio,recall,precision,correct,putative,correspondences";
}

std::string EvalReport::to_csv_row(const std::string& scene, const std::string& method,
                                   std::size_t k, std::optional<double> ratio) const {
    char buf[512];
    std::string ratio_s = ratio ? [&] {
        char rb[32];
        std::snprintf(rb, sizeof(rb), "%g", *ratio);
        return std::string(rb);
    }() : std::string();
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%s,%s,%s,%zu,%zu,%zu", scene.c_str(),
                  method.c_str(), k, ratio_s.c_str(),
                  recall_defined ? std::to_string(recall).c_str() : "undefined",
                  precision_defined ? std::to_string(precision).c_str() : "undefined", correct,
                  putative, correspondences);
    return buf;
}

EvalReport eval_recall(const MatchList& matches, const KeypointSet& kp_a, const KeypointSet& kp_b,
                       const Homography& h, double threshold_px) {
    if (threshold_px <= 0.0) throw std::invalid_argument("eval_recall: threshold must be positive");
    EvalReport rep;
    rep.threshold_px = threshold_px;

    std::vector<Point> warped(kp_a.size());
    for (std::size_t i = 0; i < kp_a.size(); ++i)
        warped[i] = warp_point(h, {kp_a.points[i].x, kp_a.points[i].y});

    for (std::size_t i = 0; i < kp_a.size(); ++i) {
        for (const Keypoint& kb : kp_b.points) {
            if (std::hypot(warped[i].x - kb.x, warped[i].y - kb.y) <= threshold_px) {
                ++rep.correspondences;
                break;
            }
        }
    }

    rep.putative = matches.size();
    for (const Match& m : matches) {
        const Keypoint& kb = kp_b.points[m.reference];
        if (std::hypot(warped[m.query].x - kb.x, warped[m.query].y - kb.y) <= threshold_px)
            ++rep.correct;
    }

    if (rep.correspondences > 0) {
        rep.recall = static_cast<double>(rep.correct) / static_cast<double>(rep.correspondences);
    } else {
        rep.recall_defined = false;
    }
    if (rep.putative > 0) {
        rep.precision = static_cast<double>(rep.correct) / static_cast<double>(rep.putative);
    } else {
        rep.precision_defined = false;
    }
    return rep;
}

namespace {

// Mean precision over the pool at a given ratio; scenes with no putative
// matches are skipped.
double pool_precision(const ScenePool& pool, double ratio, double threshold_px) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (const ScenePool::Entry& e : pool.entries) {
        const MatchList matches = nn_match(*e.desc_a, *e.desc_b, ratio, false);
        const EvalReport rep =
            eval_recall(matches, e.scene->kp_a, e.scene->kp_b, e.scene->h_ab, threshold_px);
        if (rep.precision_defined) {
            sum += rep.precision;
            ++counted;
        }
    }
    return counted ? sum / static_cast<double>(counted) : 0.0;
}

}  // namespace

RatioTuneResult tune_ratio(const ScenePool& pool, double target_precision, double threshold_px) {
    if (target_precision < 0.0 || target_precision >= 1.0)
        throw std::invalid_argument("tune_ratio: target precision must be in [0, 1)");
    if (pool.entries.empty()) throw std::invalid_argument("tune_ratio: empty scene pool");

    if (pool_precision(pool, 1.0, threshold_px) >= target_precision) return {1.0, true};
    if (pool_precision(pool, 0.5, threshold_px) < target_precision) return {0.5, false};

    // precision is monotone non-increasing in the ratio, so bisect
    double lo = 0.5, hi = 1.0;
    for (int iter = 0; iter < 20; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (pool_precision(pool, mid, threshold_px) >= target_precision)
            lo = mid;
        else
            hi = mid;
    }
    return {lo, true};
}

std::vector<DensityPoint> density_sweep(const SceneFile& scene, const Matrix& desc_a,
                                        const Matrix& desc_b, const std::vector<std::size_t>& counts,
                                        std::uint64_t seed, double threshold_px) {
    const std::size_t ka = scene.kp_a.size(), kb = scene.kp_b.size();
    std::vector<DensityPoint> out;
    for (std::size_t ci = 0; ci < counts.size(); ++ci) {
        const std::size_t count = counts[ci];
        if (count == 0 || count > std::min(ka, kb))
            throw std::invalid_argument("density_sweep: count exceeds available keypoints");
        Rng rng(Rng::derive(seed, ci));
        auto subsample = [&rng](std::size_t total, std::size_t want) {
            std::vector<std::size_t> idx(total);
            for (std::size_t i = 0; i < total; ++i) idx[i] = i;
            rng.shuffle(idx);
            idx.resize(want);
            std::sort(idx.begin(), idx.end());
            return idx;
        };
        const std::vector<std::size_t> ia = subsample(ka, count);
        const std::vector<std::size_t> ib = subsample(kb, count);

        KeypointSet sub_a{{}, scene.kp_a.width, scene.kp_a.height};
        KeypointSet sub_b{{}, scene.kp_b.width, scene.kp_b.height};
        Matrix da(count, desc_a.cols()), db(count, desc_b.cols());
        for (std::size_t t = 0; t < count; ++t) {
            sub_a.points.push_back(scene.kp_a.points[ia[t]]);
            sub_b.points.push_back(scene.kp_b.points[ib[t]]);
            for (std::size_t j = 0; j < desc_a.cols(); ++j) da(t, j) = desc_a(ia[t], j);
            for (std::size_t j = 0; j < desc_b.cols(); ++j) db(t, j) = desc_b(ib[t], j);
        }
        // match links are meaningless on the subsets; recall only needs geometry
        for (Keypoint& p : sub_a.points) p.match_index = -1;
        for (Keypoint& p : sub_b.points) p.match_index = -1;

        const MatchList matches = nn_match(da, db, std::nullopt, false);
        out.push_back({count, eval_recall(matches, sub_a, sub_b, scene.h_ab, threshold_px)});
    }
    return out;
}

double repeatability(const std::vector<double>& resp_a, const std::vector<double>& resp_b,
                     const KeypointSet& kp_a, const KeypointSet& kp_b, const Homography& h,
                     std::size_t top_n, double threshold_px) {
    if (resp_a.size() != kp_a.size() || resp_b.size() != kp_b.size())
        throw std::invalid_argument("repeatability: response count mismatch");
    if (top_n == 0 || top_n > std::min(kp_a.size(), kp_b.size()))
        throw std::invalid_argument("repeatability: top_n out of range");

    auto top_indices = [top_n](const std::vector<double>& resp) {
        std::vector<std::size_t> idx(resp.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(),
                         [&resp](std::size_t a, std::size_t b) { return resp[a] > resp[b]; });
        idx.resize(top_n);
        return idx;
    };
    const std::vector<std::size_t> top_a = top_indices(resp_a);
    const std::vector<std::size_t> top_b = top_indices(resp_b);

    std::size_t hits = 0;
    for (std::size_t i : top_a) {
        const Point w = warp_point(h, {kp_a.points[i].x, kp_a.points[i].y});
        for (std::size_t j : top_b) {
            if (std::hypot(w.x - kp_b.points[j].x, w.y - kp_b.points[j].y) <= threshold_px) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(top_n);
}

}  // namespace ctxaug
