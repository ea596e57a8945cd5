#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ammpl/array.hpp"
#include "ammpl/autodiff.hpp"

namespace ammpl {

/// Model dimensions. Defaults are the desk-scale configuration.
struct DimConfig {
    std::uint32_t l = 32;    ///< token embedding width
    std::uint32_t d = 32;    ///< joint representation width (text and image)
    std::uint32_t d_h = 64;  ///< hidden width of both towers
    std::uint32_t b = 8;     ///< patch grid side
    std::uint32_t q = 4;     ///< patch pixel side
    std::uint32_t u = 3;     ///< channels
    std::uint32_t M = 4;     ///< context length
    std::uint32_t k = 5;     ///< class count

    std::size_t patch_size() const { return std::size_t{q} * q * u; }
    std::size_t grid_cells() const { return std::size_t{b} * b; }
    /// Throws ArgumentError unless every field is positive.
    void validate() const;

    friend bool operator==(const DimConfig&, const DimConfig&) = default;
};

/// Fixed input normalization of the image tower: pixels are centred on this
/// value before the first layer, so mid-grey patches carry little signal.
inline constexpr double kPixelMean = 0.5;

/// Stand-in for the pretrained text and image towers. Never trained.
///
/// Text:  mean over tokens -> W1 (l x d_h) -> tanh -> W2 (d_h x d) -> Proj (d x d)
/// Image: per patch (pixels - kPixelMean) -> W1 (qqu x d_h) -> tanh -> W2
///        (d_h x d), mean over the grid, then Proj (d x d).
/// Both outputs are L2-normalized rows.
struct EncoderWeights {
    std::uint64_t seed = 0;
    DimConfig dims;
    Array text_w1, text_w2, text_proj;
    Array image_w1, image_w2, image_proj;

    bool bitwise_equal(const EncoderWeights& other) const;
};

/// Gaussian weights with standard deviation 1/sqrt(fan_in), fully determined
/// by (seed, dims).
EncoderWeights init_frozen(std::uint64_t seed, const DimConfig& dims);

/// T: [k x (M+1) x l] -> Z: [k x d]. Weights enter the tape as constants.
ad::Var text_encode(const EncoderWeights& w, const ad::Var& prompts);

/// I: [k x b x b x q x q x u] -> X: [k x d].
ad::Var image_encode(const EncoderWeights& w, const ad::Var& images);

/// Flat binary dump: "AMPL", u32 version, eight u32 dims (l d d_h b q u M k),
/// then every weight as little-endian f64 in declaration order.
void save_weights(const EncoderWeights& w, const std::filesystem::path& path);
/// `seed` is not part of the file; it is recorded on the returned value.
EncoderWeights load_weights(const std::filesystem::path& path, std::uint64_t seed = 0);

}  // namespace ammpl
