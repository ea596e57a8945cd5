#include "ammpl/encoders.hpp"

#include <cmath>
#include <fstream>

#include "ammpl/errors.hpp"
#include "ammpl/random.hpp"
#include "binio.hpp"

namespace ammpl {

namespace {

constexpr std::uint32_t kWeightsVersion = 1;

Array gaussian(RandomStream& rng, std::size_t fan_in, std::size_t fan_out) {
    Array w({fan_in, fan_out});
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = sd * rng.normal();
    return w;
}

}  // namespace

void DimConfig::validate() const {
    const std::uint32_t all[] = {l, d, d_h, b, q, u, M, k};
    for (auto v : all) {
        if (v == 0) throw ArgumentError("dims: every dimension must be positive");
    }
}

bool EncoderWeights::bitwise_equal(const EncoderWeights& o) const {
    return seed == o.seed && dims == o.dims && text_w1.bitwise_equal(o.text_w1) &&
           text_w2.bitwise_equal(o.text_w2) && text_proj.bitwise_equal(o.text_proj) &&
           image_w1.bitwise_equal(o.image_w1) && image_w2.bitwise_equal(o.image_w2) &&
           image_proj.bitwise_equal(o.image_proj);
}

EncoderWeights init_frozen(std::uint64_t seed, const DimConfig& dims) {
    dims.validate();
    EncoderWeights w;
    w.seed = seed;
    w.dims = dims;
    RandomStream text(seed, "encoder.text");
    w.text_w1 = gaussian(text, dims.l, dims.d_h);
    w.text_w2 = gaussian(text, dims.d_h, dims.d);
    w.text_proj = gaussian(text, dims.d, dims.d);
    RandomStream image(seed, "encoder.image");
    w.image_w1 = gaussian(image, dims.patch_size(), dims.d_h);
    w.image_w2 = gaussian(image, dims.d_h, dims.d);
    w.image_proj = gaussian(image, dims.d, dims.d);
    return w;
}

ad::Var text_encode(const EncoderWeights& w, const ad::Var& prompts) {
    const Shape& s = prompts.shape();
    const DimConfig& dm = w.dims;
    if (s.size() != 3 || s[1] != dm.M + 1u || s[2] != dm.l) {
        throw ShapeError("text_encode: shape mismatch " + shape_str(s) + " vs [k x " +
                         std::to_string(dm.M + 1) + " x " + std::to_string(dm.l) + "]");
    }
    ad::Tape& t = prompts.tape();
    ad::Var pooled = ad::mean_axis(prompts, 1);  // [k x l]
    ad::Var h = ad::tanh(ad::matmul(pooled, t.constant(w.text_w1)));
    ad::Var feat = ad::matmul(h, t.constant(w.text_w2));
    ad::Var proj = ad::matmul(feat, t.constant(w.text_proj));
    return ad::normalize_last(proj);
}

ad::Var image_encode(const EncoderWeights& w, const ad::Var& images) {
    const Shape& s = images.shape();
    const DimConfig& dm = w.dims;
    if (s.size() != 6 || s[1] != dm.b || s[2] != dm.b || s[3] != dm.q || s[4] != dm.q ||
        s[5] != dm.u) {
        throw ShapeError("image_encode: shape mismatch " + shape_str(s) + " vs [k x " +
                         std::to_string(dm.b) + " x " + std::to_string(dm.b) + " x " +
                         std::to_string(dm.q) + " x " + std::to_string(dm.q) + " x " +
                         std::to_string(dm.u) + "]");
    }
    ad::Tape& t = images.tape();
    const std::size_t k = s[0];
    const std::size_t cells = dm.grid_cells();
    ad::Var patches = ad::add_scalar(ad::reshape(images, {k * cells, dm.patch_size()}), -kPixelMean);
    ad::Var h = ad::tanh(ad::matmul(patches, t.constant(w.image_w1)));
    ad::Var feat = ad::matmul(h, t.constant(w.image_w2));  // [k*cells x d]
    ad::Var pooled = ad::mean_axis(ad::reshape(feat, {k, cells, dm.d}), 1);
    ad::Var proj = ad::matmul(pooled, t.constant(w.image_proj));
    return ad::normalize_last(proj);
}

void save_weights(const EncoderWeights& w, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    binio::put_magic(os, "AMPL");
    binio::put_u32(os, kWeightsVersion);
    const DimConfig& d = w.dims;
    for (auto v : {d.l, d.d, d.d_h, d.b, d.q, d.u, d.M, d.k}) binio::put_u32(os, v);
    for (const Array* a :
         {&w.text_w1, &w.text_w2, &w.text_proj, &w.image_w1, &w.image_w2, &w.image_proj}) {
        binio::put_values(os, *a);
    }
    if (!os) throw IoError("write failed for " + path.string());
}

EncoderWeights load_weights(const std::filesystem::path& path, std::uint64_t seed) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    binio::expect_magic(is, "AMPL");
    const std::uint32_t version = binio::get_u32(is, "version");
    if (version != kWeightsVersion) {
        throw FormatError("weights: unsupported version " + std::to_string(version));
    }
    DimConfig d;
    d.l = binio::get_u32(is);
    d.d = binio::get_u32(is);
    d.d_h = binio::get_u32(is);
    d.b = binio::get_u32(is);
    d.q = binio::get_u32(is);
    d.u = binio::get_u32(is);
    d.M = binio::get_u32(is);
    d.k = binio::get_u32(is);
    try {
        d.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("weights: ") + e.what());
    }
    EncoderWeights w;
    w.seed = seed;
    w.dims = d;
    w.text_w1 = Array({d.l, d.d_h});
    w.text_w2 = Array({d.d_h, d.d});
    w.text_proj = Array({d.d, d.d});
    w.image_w1 = Array({d.patch_size(), d.d_h});
    w.image_w2 = Array({d.d_h, d.d});
    w.image_proj = Array({d.d, d.d});
    for (Array* a : {&w.text_w1, &w.text_w2, &w.text_proj, &w.image_w1, &w.image_w2, &w.image_proj}) {
        binio::get_values(is, *a);
    }
    return w;
}

}  // namespace ammpl
