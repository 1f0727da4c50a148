#include "ctxaug/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctxaug {

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.desc_dim = scene.desc_dim;
    m.geo_width = geo_width;
    m.vis_depth = scene.regional_depth;
    m.vis_reduce_hidden = vis_reduce_hidden;
    m.vis_fuse_hidden = vis_fuse_hidden;
    return m;
}

void RunConfig::set_seed(std::uint64_t seed) {
    scene.seed = seed;
    train.seed = seed;
}

void RunConfig::validate() const {
    scene.validate();
    train.validate();
    if (scene_count == 0) throw std::invalid_argument("config: scene_count must be >= 1");
    if (geo_width == 0 || vis_reduce_hidden == 0 || vis_fuse_hidden == 0)
        throw std::invalid_argument("config: encoder widths must be positive");
    if (knn_k == 0) throw std::invalid_argument("config: knn_k must be >= 1");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

std::string RunConfig::effective_text() const {
    std::ostringstream os;
    os << "scene_count=" << scene_count << '\n'
       << "image_size=" << fmt_double(scene.image_size) << '\n'
       << "keypoint_count=" << scene.keypoint_count << '\n'
       << "ambiguity_groups=" << scene.ambiguity_groups << '\n'
       << "ambiguity_group_size=" << scene.ambiguity_group_size << '\n'
       << "descriptor_noise_sigma=" << fmt_double(scene.descriptor_noise_sigma) << '\n'
       << "undiscovered_fraction=" << fmt_double(scene.undiscovered_fraction) << '\n'
       << "unrepeatable_fraction=" << fmt_double(scene.unrepeatable_fraction) << '\n'
       << "homography_offset=" << fmt_double(scene.homography_offset) << '\n'
       << "regional_depth=" << scene.regional_depth << '\n'
       << "desc_dim=" << scene.desc_dim << '\n'
       << "seed=" << scene.seed << '\n'
       << "base_lr=" << fmt_double(train.base_lr) << '\n'
       << "momentum=" << fmt_double(train.momentum) << '\n'
       << "weight_decay=" << fmt_double(train.weight_decay) << '\n'
       << "lr_decay_factor=" << fmt_double(train.lr_decay_factor) << '\n'
       << "lr_decay_every=" << train.lr_decay_every << '\n'
       << "batch_pairs=" << train.batch_pairs << '\n'
       << "keypoints_per_pair=" << train.keypoints_per_pair << '\n'
       << "lambda=" << fmt_double(train.lambda) << '\n'
       << "max_steps=" << train.max_steps << '\n'
       << "alpha_trainable=" << (train.alpha_trainable ? "true" : "false") << '\n'
       << "geo_width=" << geo_width << '\n'
       << "vis_reduce_hidden=" << vis_reduce_hidden << '\n'
       << "vis_fuse_hidden=" << vis_fuse_hidden << '\n'
       << "knn_k=" << knn_k << '\n'
       << "# fixed: cn_epsilon=1e-06, l2_epsilon=1e-12, log_floor=1e-30\n"
       << "# fixed: geo_residual_units=4, perceptrons_per_unit=2, cn_before_bn=true\n"
       << "# fixed: vis_concat_order=[regional||local], bn_momentum=0.9\n";
    return os.str();
}

namespace {

bool parse_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw std::invalid_argument("config: key " + key + " expects a boolean, got '" + val + "'");
}

double parse_double(const std::string& key, const std::string& val) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: key " + key + " expects a number, got '" + val + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& val) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw std::invalid_argument("config: key " + key + " expects a non-negative integer, got '" +
                                    val + "'");
    }
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "scene_count") cfg.scene_count = parse_uint(key, val);
        else if (key == "image_size") cfg.scene.image_size = parse_double(key, val);
        else if (key == "keypoint_count") cfg.scene.keypoint_count = parse_uint(key, val);
        else if (key == "ambiguity_groups") cfg.scene.ambiguity_groups = parse_uint(key, val);
        else if (key == "ambiguity_group_size") cfg.scene.ambiguity_group_size = parse_uint(key, val);
        else if (key == "descriptor_noise_sigma") cfg.scene.descriptor_noise_sigma = parse_double(key, val);
        else if (key == "undiscovered_fraction") cfg.scene.undiscovered_fraction = parse_double(key, val);
        else if (key == "unrepeatable_fraction") cfg.scene.unrepeatable_fraction = parse_double(key, val);
        else if (key == "homography_offset") cfg.scene.homography_offset = parse_double(key, val);
        else if (key == "regional_depth") cfg.scene.regional_depth = parse_uint(key, val);
        else if (key == "desc_dim") cfg.scene.desc_dim = parse_uint(key, val);
        else if (key == "seed") cfg.set_seed(parse_uint(key, val));
        else if (key == "base_lr") cfg.train.base_lr = parse_double(key, val);
        else if (key == "momentum") cfg.train.momentum = parse_double(key, val);
        else if (key == "weight_decay") cfg.train.weight_decay = parse_double(key, val);
        else if (key == "lr_decay_factor") cfg.train.lr_decay_factor = parse_double(key, val);
        else if (key == "lr_decay_every") cfg.train.lr_decay_every = parse_uint(key, val);
        else if (key == "batch_pairs") cfg.train.batch_pairs = parse_uint(key, val);
        else if (key == "keypoints_per_pair") cfg.train.keypoints_per_pair = parse_uint(key, val);
        else if (key == "lambda") cfg.train.lambda = parse_double(key, val);
        else if (key == "max_steps") cfg.train.max_steps = parse_uint(key, val);
        else if (key == "alpha_trainable") cfg.train.alpha_trainable = parse_bool(key, val);
        else if (key == "geo_width") cfg.geo_width = parse_uint(key, val);
        else if (key == "vis_reduce_hidden") cfg.vis_reduce_hidden = parse_uint(key, val);
        else if (key == "vis_fuse_hidden") cfg.vis_fuse_hidden = parse_uint(key, val);
        else if (key == "knn_k") cfg.knn_k = parse_uint(key, val);
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace ctxaug
