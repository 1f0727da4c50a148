#include "ctxaug/scene.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ctxaug/layers.hpp"
#include "ctxaug/rng.hpp"

namespace ctxaug {

const char* category_name(KeypointCategory c) {
    switch (c) {
        case KeypointCategory::Matchable: return "matchable";
        case KeypointCategory::Undiscovered: return "undiscovered";
        case KeypointCategory::Unrepeatable: return "unrepeatable";
    }
    return "?";
}

KeypointCategory category_from_name(const std::string& name) {
    if (name == "matchable") return KeypointCategory::Matchable;
    if (name == "undiscovered") return KeypointCategory::Undiscovered;
    if (name == "unrepeatable") return KeypointCategory::Unrepeatable;
    throw std::runtime_error("unknown keypoint category: " + name);
}

Matrix KeypointSet::coords_px() const {
    Matrix m(points.size(), 2);
    for (std::size_t i = 0; i < points.size(); ++i) {
        m(i, 0) = points[i].x;
        m(i, 1) = points[i].y;
    }
    return m;
}

Matrix KeypointSet::coords_normalized() const {
    Matrix m(points.size(), 2);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Point p = normalize_coords({points[i].x, points[i].y}, width, height);
        m(i, 0) = p.x;
        m(i, 1) = p.y;
    }
    return m;
}

std::vector<std::size_t> KeypointSet::indices_of(KeypointCategory c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].category == c) out.push_back(i);
    return out;
}

void SceneSpec::validate() const {
    if (image_size <= 0.0) throw std::invalid_argument("scene spec: image_size must be positive");
    if (keypoint_count < 2) throw std::invalid_argument("scene spec: keypoint_count must be >= 2");
    if (ambiguity_groups > 0 && ambiguity_group_size < 2)
        throw std::invalid_argument("scene spec: ambiguity_group_size must be >= 2");
    if (ambiguity_groups > 0 && keypoint_count < 2 * ambiguity_group_size)
        throw std::invalid_argument("scene spec: keypoint_count must be >= 2 * group size");
    if (descriptor_noise_sigma < 0.0)
        throw std::invalid_argument("scene spec: descriptor_noise_sigma must be >= 0");
    if (undiscovered_fraction < 0.0 || unrepeatable_fraction < 0.0 ||
        undiscovered_fraction + unrepeatable_fraction >= 1.0)
        throw std::invalid_argument("scene spec: category fractions must be >= 0 and sum < 1");
    if (homography_offset < 0.0 || homography_offset >= 0.5)
        throw std::invalid_argument("scene spec: homography_offset must be in [0, 0.5)");
    if (regional_depth == 0) throw std::invalid_argument("scene spec: regional_depth must be >= 1");
    const std::size_t n_und = static_cast<std::size_t>(
        std::llround(undiscovered_fraction * static_cast<double>(keypoint_count)));
    const std::size_t n_unr = static_cast<std::size_t>(
        std::llround(unrepeatable_fraction * static_cast<double>(keypoint_count)));
    const std::size_t n_m = keypoint_count - n_und - n_unr;
    if (ambiguity_groups * ambiguity_group_size > n_m)
        throw std::invalid_argument(
            "scene spec: ambiguity groups need more matchable keypoints than the fractions leave");
}

namespace {

Matrix random_unit_vector(std::size_t dim, Rng& rng) {
    Matrix v(1, dim);
    for (std::size_t i = 0; i < dim; ++i) v(0, i) = rng.normal();
    return l2_normalize_rows(v);
}

Matrix noisy_descriptor(const Matrix& base, double sigma, Rng& rng) {
    Matrix d = base;
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += sigma * rng.normal();
    return l2_normalize_rows(d);
}

// Low-frequency plane waves over the image: channel c of the grid feature at
// pixel (x, y) is cos(kx_c * x/W + ky_c * y/H + phi_c).
struct WaveField {
    std::vector<double> kx, ky, phi;
    double width, height;

    WaveField(std::size_t depth, double w, double h, Rng& rng) : width(w), height(h) {
        kx.resize(depth);
        ky.resize(depth);
        phi.resize(depth);
        for (std::size_t c = 0; c < depth; ++c) {
            const double r = rng.uniform(3.141592653589793, 3.0 * 3.141592653589793);
            const double theta = rng.uniform(0.0, 2.0 * 3.141592653589793);
            kx[c] = r * std::cos(theta);
            ky[c] = r * std::sin(theta);
            phi[c] = rng.uniform(0.0, 2.0 * 3.141592653589793);
        }
    }

    void eval(Point p, double* out) const {
        for (std::size_t c = 0; c < kx.size(); ++c)
            out[c] = std::cos(kx[c] * p.x / width + ky[c] * p.y / height + phi[c]);
    }
};

}  // namespace

SceneFile gen_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const double w = spec.image_size, h = spec.image_size;
    const std::size_t n = spec.keypoint_count;
    const std::size_t n_und = static_cast<std::size_t>(
        std::llround(spec.undiscovered_fraction * static_cast<double>(n)));
    const std::size_t n_unr = static_cast<std::size_t>(
        std::llround(spec.unrepeatable_fraction * static_cast<double>(n)));
    const std::size_t n_m = n - n_und - n_unr;
    const std::size_t n_shared = n_m + n_und;  // points present in both views

    SceneFile scene;
    scene.spec = spec;
    scene.kp_a.width = scene.kp_b.width = w;
    scene.kp_a.height = scene.kp_b.height = h;

    Homography h_norm;
    for (int attempt = 0;; ++attempt) {
        try {
            h_norm = homography_from_4pt(draw_offsets(rng, spec.homography_offset));
            break;
        } catch (const std::runtime_error&) {
            if (attempt >= 10) throw;
        }
    }
    scene.h_ab = pixel_homography(h_norm, w, h);

    // shared points: first n_m matchable (group members first), then undiscovered
    std::vector<Keypoint> a_points(n), b_shared(n_shared);
    for (std::size_t i = 0; i < n_shared; ++i) {
        Keypoint& ka = a_points[i];
        ka.x = rng.uniform(0.0, w);
        ka.y = rng.uniform(0.0, h);
        ka.category = i < n_m ? KeypointCategory::Matchable : KeypointCategory::Undiscovered;
        const Point warped = warp_point(scene.h_ab, {ka.x, ka.y});
        Keypoint& kb = b_shared[i];
        kb.x = warped.x + rng.uniform(-0.35, 0.35);
        kb.y = warped.y + rng.uniform(-0.35, 0.35);
        kb.category = ka.category;
    }
    for (std::size_t i = n_shared; i < n; ++i) {
        a_points[i] = {rng.uniform(0.0, w), rng.uniform(0.0, h), KeypointCategory::Unrepeatable, -1};
    }

    // descriptor bases; group members share a base
    std::vector<Matrix> group_base(spec.ambiguity_groups);
    for (std::size_t gi = 0; gi < spec.ambiguity_groups; ++gi)
        group_base[gi] = random_unit_vector(spec.desc_dim, rng);
    const std::size_t grouped = spec.ambiguity_groups * spec.ambiguity_group_size;
    std::vector<Matrix> a_base(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < grouped)
            a_base[i] = group_base[i / spec.ambiguity_group_size];
        else
            a_base[i] = random_unit_vector(spec.desc_dim, rng);
    }

    scene.desc_a = Matrix(n, spec.desc_dim);
    Matrix b_shared_desc(n_shared, spec.desc_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const Matrix d = noisy_descriptor(a_base[i], spec.descriptor_noise_sigma, rng);
        for (std::size_t j = 0; j < spec.desc_dim; ++j) scene.desc_a(i, j) = d(0, j);
    }
    for (std::size_t i = 0; i < n_shared; ++i) {
        const Matrix d = noisy_descriptor(a_base[i], spec.descriptor_noise_sigma, rng);
        for (std::size_t j = 0; j < spec.desc_dim; ++j) b_shared_desc(i, j) = d(0, j);
    }

    // B view: shared points plus its own unrepeatable ones, in shuffled order
    std::vector<Keypoint> b_points(b_shared);
    Matrix b_desc_unshuffled(n, spec.desc_dim);
    for (std::size_t i = 0; i < n_shared; ++i)
        for (std::size_t j = 0; j < spec.desc_dim; ++j) b_desc_unshuffled(i, j) = b_shared_desc(i, j);
    for (std::size_t i = n_shared; i < n; ++i) {
        b_points.push_back(
            {rng.uniform(0.0, w), rng.uniform(0.0, h), KeypointCategory::Unrepeatable, -1});
        const Matrix d =
            noisy_descriptor(random_unit_vector(spec.desc_dim, rng), spec.descriptor_noise_sigma, rng);
        for (std::size_t j = 0; j < spec.desc_dim; ++j) b_desc_unshuffled(i, j) = d(0, j);
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::size_t> pos(n);  // pos[original] = shuffled row
    for (std::size_t r = 0; r < n; ++r) pos[order[r]] = r;

    scene.kp_b.points.resize(n);
    scene.desc_b = Matrix(n, spec.desc_dim);
    for (std::size_t r = 0; r < n; ++r) {
        scene.kp_b.points[r] = b_points[order[r]];
        for (std::size_t j = 0; j < spec.desc_dim; ++j)
            scene.desc_b(r, j) = b_desc_unshuffled(order[r], j);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (a_points[i].category == KeypointCategory::Matchable) {
            a_points[i].match_index = static_cast<int>(pos[i]);
            scene.kp_b.points[pos[i]].match_index = static_cast<int>(i);
        }
    }
    scene.kp_a.points = std::move(a_points);

    // regional grids: A from the analytic field, B resampled from A through H
    const std::size_t cells_per_side =
        std::max<std::size_t>(1, static_cast<std::size_t>(spec.image_size / 32.0));
    RegionalGrid& ga = scene.grid_a;
    ga.gh = ga.gw = cells_per_side;
    ga.depth = spec.regional_depth;
    ga.stride = w / static_cast<double>(cells_per_side);
    ga.features = Matrix(ga.cell_count(), ga.depth);
    const WaveField field(spec.regional_depth, w, h, rng);
    for (std::size_t cell = 0; cell < ga.cell_count(); ++cell)
        field.eval(ga.anchor(cell), ga.features.row(cell));

    RegionalGrid& gb = scene.grid_b;
    gb.gh = gb.gw = cells_per_side;
    gb.depth = spec.regional_depth;
    gb.stride = ga.stride;
    const Homography h_inv = invert(scene.h_ab);
    Matrix back_projected(gb.cell_count(), 2);
    for (std::size_t cell = 0; cell < gb.cell_count(); ++cell) {
        const Point p = warp_point(h_inv, gb.anchor(cell));
        back_projected(cell, 0) = p.x;
        back_projected(cell, 1) = p.y;
    }
    gb.features = interpolate_regional(ga, back_projected, 3);

    return scene;
}

SceneReport verify_scene(const SceneFile& scene) {
    SceneReport rep;
    auto flag = [&rep](const std::string& msg) { rep.violations.push_back(msg); };

    const std::size_t n = scene.kp_a.size();
    if (scene.kp_b.size() != n) flag("view keypoint counts differ");
    if (scene.desc_a.rows() != n || scene.desc_b.rows() != scene.kp_b.size())
        flag("descriptor row count does not match keypoint count");

    double residual_sum = 0.0;
    std::size_t residual_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Keypoint& ka = scene.kp_a.points[i];
        switch (ka.category) {
            case KeypointCategory::Matchable: ++rep.matchable_count; break;
            case KeypointCategory::Undiscovered: ++rep.undiscovered_count; break;
            case KeypointCategory::Unrepeatable: ++rep.unrepeatable_count; break;
        }
        if (ka.category == KeypointCategory::Matchable) {
            if (ka.match_index < 0 || static_cast<std::size_t>(ka.match_index) >= scene.kp_b.size()) {
                flag("keypoint " + std::to_string(i) + ": matchable without valid match_index");
                continue;
            }
            const Keypoint& kb = scene.kp_b.points[static_cast<std::size_t>(ka.match_index)];
            if (kb.match_index != static_cast<int>(i))
                flag("keypoint " + std::to_string(i) + ": asymmetric match link");
            const Point warped = warp_point(scene.h_ab, {ka.x, ka.y});
            const double res = std::hypot(warped.x - kb.x, warped.y - kb.y);
            residual_sum += res;
            ++residual_count;
            if (res > 0.5)
                flag("keypoint " + std::to_string(i) + ": warp residual " + std::to_string(res) +
                     " px exceeds 0.5");
        } else if (ka.match_index != -1) {
            flag("keypoint " + std::to_string(i) + ": non-matchable with match_index set");
        }
    }
    rep.mean_warp_residual_px = residual_count ? residual_sum / static_cast<double>(residual_count) : 0.0;

    auto check_unit_rows = [&](const Matrix& d, const char* which) {
        for (std::size_t i = 0; i < d.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d.cols(); ++j) s += d(i, j) * d(i, j);
            if (std::fabs(std::sqrt(s) - 1.0) > 1e-6)
                flag(std::string(which) + " descriptor row " + std::to_string(i) + " not unit norm");
        }
    };
    check_unit_rows(scene.desc_a, "view-A");
    check_unit_rows(scene.desc_b, "view-B");

    if (!scene.grid_a.features.all_finite() || !scene.grid_b.features.all_finite())
        flag("regional grid contains non-finite values");

    const std::size_t expect_und = static_cast<std::size_t>(std::llround(
        scene.spec.undiscovered_fraction * static_cast<double>(scene.spec.keypoint_count)));
    const std::size_t expect_unr = static_cast<std::size_t>(std::llround(
        scene.spec.unrepeatable_fraction * static_cast<double>(scene.spec.keypoint_count)));
    auto close = [](std::size_t a, std::size_t b) {
        return (a > b ? a - b : b - a) <= 1;
    };
    if (!close(rep.undiscovered_count, expect_und))
        flag("undiscovered count off by more than 1 from spec fraction");
    if (!close(rep.unrepeatable_count, expect_unr))
        flag("unrepeatable count off by more than 1 from spec fraction");

    return rep;
}

std::string SceneReport::to_text() const {
    std::ostringstream os;
    os << "matchable=" << matchable_count << "\n"
       << "undiscovered=" << undiscovered_count << "\n"
       << "unrepeatable=" << unrepeatable_count << "\n"
       << "mean_warp_residual_px=" << mean_warp_residual_px << "\n"
       << "violations=" << violations.size() << "\n";
    for (const std::string& v : violations) os << "violation: " << v << "\n";
    return os.str();
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void save_keypoints_csv(const std::string& path, const KeypointSet& kp) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << "x,y,category,match_index\n";
    for (const Keypoint& p : kp.points)
        os << fmt_double(p.x) << ',' << fmt_double(p.y) << ',' << category_name(p.category) << ','
           << p.match_index << '\n';
}

KeypointSet load_keypoints_csv(const std::string& path, double width, double height) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open for read: " + path);
    KeypointSet kp;
    kp.width = width;
    kp.height = height;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string x, y, cat, idx;
        std::getline(ls, x, ',');
        std::getline(ls, y, ',');
        std::getline(ls, cat, ',');
        std::getline(ls, idx, ',');
        kp.points.push_back(
            {std::stod(x), std::stod(y), category_from_name(cat), std::stoi(idx)});
    }
    return kp;
}

}  // namespace

void save_scene(const std::string& dir, const SceneFile& scene) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_keypoints_csv(dir + "/keypoints_a.csv", scene.kp_a);
    save_keypoints_csv(dir + "/keypoints_b.csv", scene.kp_b);
    save_matrix_file(dir + "/desc_a.ctxm", scene.desc_a);
    save_matrix_file(dir + "/desc_b.ctxm", scene.desc_b);
    save_grid_file(dir + "/grid_a.ctxg", scene.grid_a);
    save_grid_file(dir + "/grid_b.ctxg", scene.grid_b);
    {
        std::ofstream os(dir + "/h_ab.txt", std::ios::binary);
        if (!os) throw std::runtime_error("cannot open for write: " + dir + "/h_ab.txt");
        os << homography_to_text(scene.h_ab);
    }
    {
        std::ofstream os(dir + "/spec.txt", std::ios::binary);
        if (!os) throw std::runtime_error("cannot open for write: " + dir + "/spec.txt");
        const SceneSpec& s = scene.spec;
        os << "image_size=" << fmt_double(s.image_size) << '\n'
           << "keypoint_count=" << s.keypoint_count << '\n'
           << "ambiguity_groups=" << s.ambiguity_groups << '\n'
           << "ambiguity_group_size=" << s.ambiguity_group_size << '\n'
           << "descriptor_noise_sigma=" << fmt_double(s.descriptor_noise_sigma) << '\n'
           << "undiscovered_fraction=" << fmt_double(s.undiscovered_fraction) << '\n'
           << "unrepeatable_fraction=" << fmt_double(s.unrepeatable_fraction) << '\n'
           << "homography_offset=" << fmt_double(s.homography_offset) << '\n'
           << "regional_depth=" << s.regional_depth << '\n'
           << "desc_dim=" << s.desc_dim << '\n'
           << "seed=" << s.seed << '\n';
    }
}

SceneFile load_scene(const std::string& dir) {
    SceneFile scene;
    {
        std::ifstream is(dir + "/spec.txt");
        if (!is) throw std::runtime_error("cannot open for read: " + dir + "/spec.txt");
        std::string line;
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 1);
            SceneSpec& s = scene.spec;
            if (key == "image_size") s.image_size = std::stod(val);
            else if (key == "keypoint_count") s.keypoint_count = std::stoul(val);
            else if (key == "ambiguity_groups") s.ambiguity_groups = std::stoul(val);
            else if (key == "ambiguity_group_size") s.ambiguity_group_size = std::stoul(val);
            else if (key == "descriptor_noise_sigma") s.descriptor_noise_sigma = std::stod(val);
            else if (key == "undiscovered_fraction") s.undiscovered_fraction = std::stod(val);
            else if (key == "unrepeatable_fraction") s.unrepeatable_fraction = std::stod(val);
            else if (key == "homography_offset") s.homography_offset = std::stod(val);
            else if (key == "regional_depth") s.regional_depth = std::stoul(val);
            else if (key == "desc_dim") s.desc_dim = std::stoul(val);
            else if (key == "seed") s.seed = std::stoull(val);
            else throw std::runtime_error("scene spec.txt: unknown key " + key);
        }
    }
    scene.kp_a = load_keypoints_csv(dir + "/keypoints_a.csv", scene.spec.image_size,
                                    scene.spec.image_size);
    scene.kp_b = load_keypoints_csv(dir + "/keypoints_b.csv", scene.spec.image_size,
                                    scene.spec.image_size);
    scene.desc_a = load_matrix_file(dir + "/desc_a.ctxm");
    scene.desc_b = load_matrix_file(dir + "/desc_b.ctxm");
    scene.grid_a = load_grid_file(dir + "/grid_a.ctxg");
    scene.grid_b = load_grid_file(dir + "/grid_b.ctxg");
    {
        std::ifstream is(dir + "/h_ab.txt");
        if (!is) throw std::runtime_error("cannot open for read: " + dir + "/h_ab.txt");
        std::stringstream ss;
        ss << is.rdbuf();
        scene.h_ab = homography_from_text(ss.str());
    }
    return scene;
}

}  // namespace ctxaug
