#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace capvae::synth {

// Grayscale or RGB image, channels-first, pixels in [0,1].
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t r, std::size_t col) { return pixels[(c * height + r) * width + col]; }
  float at(std::size_t c, std::size_t r, std::size_t col) const { return pixels[(c * height + r) * width + col]; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Ordered factors and their value grids. Enumeration is last-factor-fastest.
struct FactorSpec {
  std::vector<std::string> names;
  std::vector<std::vector<float>> grids;

  std::size_t factor_count() const { return names.size(); }
  std::size_t cardinality(std::size_t i) const { return grids.at(i).size(); }
  std::size_t total() const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Index of the named factor, or npos.
  std::size_t find(const std::string& name) const;
  // Throws InvalidArgument unless cardinalities >= 1, grids strictly increasing.
  void validate() const;

  friend bool operator==(const FactorSpec&, const FactorSpec&) = default;
};

// One value per factor, in FactorSpec order.
using FactorVector = std::vector<float>;

enum class Renderer : std::uint8_t { blob = 0, sprite = 1, coloured_sprite = 2 };

std::string to_string(Renderer r);
Renderer renderer_from_string(const std::string& s);

enum class SpriteShape : std::uint8_t { square = 0, ellipse = 1, triangle = 2 };

using Rgb = std::array<float, 3>;

// R, G, B, Y, C, M.
const std::vector<Rgb>& default_palette();

inline constexpr double kBlobSigma = 0.1;
// Nominal unrotated square side at scale 1, as a fraction of the canvas.
inline constexpr double kSpriteSize = 0.3;
inline constexpr int kSupersample = 4;

std::vector<float> linspace(double lo, double hi, std::size_t n);

// Factors x, y over an n x n grid spanning [0,1].
FactorSpec blob_spec(std::size_t positions = 32);
// Factors shape, scale, rotation, x, y.
FactorSpec sprite_spec(std::size_t shapes = 3, std::size_t scales = 6, std::size_t rotations = 8,
                       std::size_t positions_x = 16, std::size_t positions_y = 16);
// hue followed by the sprite factors.
FactorSpec coloured_sprite_spec(std::size_t hues = 6, std::size_t shapes = 3, std::size_t scales = 4,
                                std::size_t rotations = 8, std::size_t positions = 8);

Image render_blob(double x, double y, double blob_sigma, std::size_t resolution);

// Sprite factors are read by name (shape, scale, rotation, x, y).
Image render_sprite(const FactorVector& f, const FactorSpec& spec, std::size_t resolution);
Image render_sprite(SpriteShape shape, double scale, double rotation, double x, double y, std::size_t resolution);

Image colorize(const Image& img, std::size_t hue_index, std::span<const Rgb> palette);

// All factor combinations with pixel payloads in enumeration order.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Renderer renderer, FactorSpec spec, std::size_t channels, std::size_t height,
          std::size_t width, std::vector<float> pixels);

  Renderer renderer() const { return renderer_; }
  const FactorSpec& spec() const { return spec_; }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t image_size() const { return channels_ * height_ * width_; }
  std::size_t size() const { return count_; }

  std::span<const float> pixels(std::size_t index) const;
  Image image(std::size_t index) const;
  // Per-factor grid indices for a flat index (last factor fastest).
  std::vector<std::size_t> factor_indices(std::size_t index) const;
  FactorVector factors(std::size_t index) const;
  const std::vector<float>& payload() const { return pixels_; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  Renderer renderer_ = Renderer::blob;
  FactorSpec spec_;
  std::size_t channels_ = 1;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t count_ = 0;
  std::vector<float> pixels_;
};

Dataset enumerate_dataset(const FactorSpec& spec, Renderer renderer, std::size_t resolution);

// "CAPD" little-endian format; see README for the byte layout.
void write_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace capvae::synth
