#include "ctxaug/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ctxaug {

MlpSpec ModelConfig::matchability_spec() const {
    return {desc_dim,
            {{desc_dim, Activation::Relu, NormTag::None},
             {32, Activation::Relu, NormTag::None},
             {32, Activation::Relu, NormTag::None},
             {1, Activation::None, NormTag::None}}};
}

MlpSpec ModelConfig::vis_reduce_spec() const {
    return {vis_depth,
            {{vis_reduce_hidden, Activation::Relu, NormTag::Cn},
             {desc_dim, Activation::None, NormTag::Cn}}};
}

MlpSpec ModelConfig::vis_fuse_spec() const {
    return {2 * desc_dim,
            {{vis_fuse_hidden, Activation::Relu, NormTag::None},
             {desc_dim, Activation::None, NormTag::None}}};
}

namespace {

void add_bn(ParamStore& s, const std::string& prefix, std::size_t width) {
    s.add(prefix + ".gamma", Matrix(1, width, 1.0));
    s.add(prefix + ".beta", Matrix(1, width, 0.0));
    s.add(prefix + ".running_mean", Matrix(1, width, 0.0), false);
    s.add(prefix + ".running_var", Matrix(1, width, 1.0), false);
}

void add_config_scalar(ParamStore& s, const std::string& key, double value) {
    Matrix m(1, 1);
    m(0, 0) = value;
    s.add("config." + key, m, false);
}

bool frozen_by_name(const std::string& name) {
    if (name.rfind("config.", 0) == 0) return true;
    auto ends_with = [&](const char* suffix) {
        const std::size_t n = std::strlen(suffix);
        return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
    };
    return ends_with(".running_mean") || ends_with(".running_var");
}

}  // namespace

ModelParameters make_model(const ModelConfig& config, Rng& rng) {
    ModelParameters model;
    model.config = config;
    ParamStore& s = model.store;
    const std::size_t c = config.geo_width;

    add_mlp_params(s, "match", config.matchability_spec(), rng);

    s.add("geo.lift.w", glorot_uniform(3, c, rng));
    s.add("geo.lift.b", Matrix(1, c, 0.0));
    for (std::size_t u = 0; u < kGeoResidualUnits; ++u) {
        for (const char* half : {"a", "b"}) {
            const std::string p = "geo.unit" + std::to_string(u) + "." + half;
            add_bn(s, p + ".bn", c);
            s.add(p + ".fc.w", glorot_uniform(c, c, rng));
            s.add(p + ".fc.b", Matrix(1, c, 0.0));
        }
    }
    add_bn(s, "geo.out.bn", c);
    s.add("geo.head.w", glorot_uniform(c, config.desc_dim, rng));
    s.add("geo.head.b", Matrix(1, config.desc_dim, 0.0));

    add_mlp_params(s, "vis.reduce", config.vis_reduce_spec(), rng);
    add_mlp_params(s, "vis.fuse", config.vis_fuse_spec(), rng);

    s.add("temperature", Matrix(1, 1, 1.0));

    add_config_scalar(s, "desc_dim", static_cast<double>(config.desc_dim));
    add_config_scalar(s, "geo_width", static_cast<double>(config.geo_width));
    add_config_scalar(s, "vis_depth", static_cast<double>(config.vis_depth));
    add_config_scalar(s, "vis_reduce_hidden", static_cast<double>(config.vis_reduce_hidden));
    add_config_scalar(s, "vis_fuse_hidden", static_cast<double>(config.vis_fuse_hidden));
    add_config_scalar(s, "cn_epsilon", kCnEpsilon);
    add_config_scalar(s, "geo_residual_units", static_cast<double>(kGeoResidualUnits));
    add_config_scalar(s, "geo_perceptrons_per_unit", 2.0);
    add_config_scalar(s, "geo_cn_before_bn", 1.0);
    add_config_scalar(s, "vis_concat_regional_first", 1.0);
    return model;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("model read: truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_model(const std::string& path, const ModelParameters& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write("CTXP", 4);
    write_u32(os, kModelFormatVersion);
    for (const ParamStore::Param& p : model.store.entries()) {
        write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        save_matrix(os, p.value);
    }
}

ModelParameters load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CTXP", 4) != 0)
        throw std::runtime_error("model read: bad magic, expected CTXP");
    const std::uint32_t version = read_u32(is);
    if (version != kModelFormatVersion)
        throw std::runtime_error("model read: unsupported format version " +
                                 std::to_string(version));

    ModelParameters model;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const std::uint32_t len = read_u32(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw std::runtime_error("model read: truncated section name");
        Matrix m = load_matrix(is);
        model.store.add(name, std::move(m), !frozen_by_name(name));
    }

    auto cfg = [&](const char* key) {
        return static_cast<std::size_t>(model.store.at(std::string("config.") + key)(0, 0));
    };
    model.config.desc_dim = cfg("desc_dim");
    model.config.geo_width = cfg("geo_width");
    model.config.vis_depth = cfg("vis_depth");
    model.config.vis_reduce_hidden = cfg("vis_reduce_hidden");
    model.config.vis_fuse_hidden = cfg("vis_fuse_hidden");
    return model;
}

}  // namespace ctxaug
