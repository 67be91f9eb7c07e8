#include "capvae/synthdata.hpp"

#include <cmath>
#include <numbers>

#include "binary_io.hpp"
#include "capvae/error.hpp"

namespace capvae::synth {

namespace {

constexpr std::uint16_t kDatasetVersion = 1;

bool finite(double v) { return std::isfinite(v); }

std::size_t channels_for(Renderer r) { return r == Renderer::coloured_sprite ? 3 : 1; }

const std::vector<std::string>& required_factors(Renderer r) {
  static const std::vector<std::string> blob{"x", "y"};
  static const std::vector<std::string> sprite{"shape", "scale", "rotation", "x", "y"};
  static const std::vector<std::string> coloured{"hue", "shape", "scale", "rotation", "x", "y"};
  switch (r) {
    case Renderer::blob: return blob;
    case Renderer::sprite: return sprite;
    case Renderer::coloured_sprite: return coloured;
  }
  throw InvalidArgument("unknown renderer");
}

// Inside test in the sprite's local frame, coordinates in units of the sprite size.
bool inside(SpriteShape shape, double u, double v) {
  switch (shape) {
    case SpriteShape::square:
      return std::abs(u) <= 0.5 && std::abs(v) <= 0.5;
    case SpriteShape::ellipse: {
      const double a = u / 0.5, b = v / 0.3;
      return a * a + b * b <= 1.0;
    }
    case SpriteShape::triangle: {
      // Isosceles, apex up: (0,-0.6), (-0.5,0.4), (0.5,0.4).
      if (v > 0.4) return false;
      const double half_width = 0.5 * (v + 0.6);  // widens linearly from the apex
      return v >= -0.6 && std::abs(u) <= half_width;
    }
  }
  return false;
}

}  // namespace

std::size_t FactorSpec::total() const {
  std::size_t n = 1;
  for (const auto& g : grids) n *= g.size();
  return n;
}

std::size_t FactorSpec::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return npos;
}

void FactorSpec::validate() const {
  if (names.empty()) throw InvalidArgument("factor spec has no factors");
  if (names.size() != grids.size()) throw InvalidArgument("factor spec: names and grids differ in length");
  if (names.size() > 255) throw InvalidArgument("factor spec: more than 255 factors");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) throw InvalidArgument("factor spec: empty factor name");
    if (grids[i].empty()) throw InvalidArgument("factor " + names[i] + ": cardinality must be >= 1");
    for (std::size_t k = 0; k < grids[i].size(); ++k) {
      if (!std::isfinite(grids[i][k])) throw InvalidArgument("factor " + names[i] + ": non-finite grid value");
      if (k > 0 && !(grids[i][k] > grids[i][k - 1]))
        throw InvalidArgument("factor " + names[i] + ": grid must be strictly increasing");
    }
    for (std::size_t j = 0; j < i; ++j)
      if (names[j] == names[i]) throw InvalidArgument("factor spec: duplicate factor " + names[i]);
  }
}

std::string to_string(Renderer r) {
  switch (r) {
    case Renderer::blob: return "blob";
    case Renderer::sprite: return "dsprites";
    case Renderer::coloured_sprite: return "coloured";
  }
  return "unknown";
}

Renderer renderer_from_string(const std::string& s) {
  if (s == "blob") return Renderer::blob;
  if (s == "dsprites" || s == "sprite") return Renderer::sprite;
  if (s == "coloured" || s == "colored") return Renderer::coloured_sprite;
  throw InvalidArgument("unknown dataset kind: " + s);
}

const std::vector<Rgb>& default_palette() {
  static const std::vector<Rgb> palette{
      {1.0f, 0.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {0.0f, 0.0f, 1.0f},
      {1.0f, 1.0f, 0.0f}, {0.0f, 1.0f, 1.0f}, {1.0f, 0.0f, 1.0f},
  };
  return palette;
}

std::vector<float> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) throw InvalidArgument("linspace: n must be >= 1");
  if (n == 1) return {static_cast<float>(lo)};
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<float>(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

namespace {

std::vector<float> index_grid(std::size_t n) {
  std::vector<float> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<float>(i);
  return g;
}

std::vector<float> rotation_grid(std::size_t n) {
  std::vector<float> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = static_cast<float>(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return g;
}

}  // namespace

FactorSpec blob_spec(std::size_t positions) {
  return FactorSpec{{"x", "y"}, {linspace(0.0, 1.0, positions), linspace(0.0, 1.0, positions)}};
}

FactorSpec sprite_spec(std::size_t shapes, std::size_t scales, std::size_t rotations,
                       std::size_t positions_x, std::size_t positions_y) {
  if (shapes == 0 || shapes > 3) throw InvalidArgument("sprite spec: shapes must be in 1..3");
  return FactorSpec{{"shape", "scale", "rotation", "x", "y"},
                    {index_grid(shapes), linspace(0.5, 1.0, scales), rotation_grid(rotations),
                     linspace(0.25, 0.75, positions_x), linspace(0.25, 0.75, positions_y)}};
}

FactorSpec coloured_sprite_spec(std::size_t hues, std::size_t shapes, std::size_t scales,
                                std::size_t rotations, std::size_t positions) {
  auto spec = sprite_spec(shapes, scales, rotations, positions, positions);
  spec.names.insert(spec.names.begin(), "hue");
  spec.grids.insert(spec.grids.begin(), index_grid(hues));
  return spec;
}

Image render_blob(double x, double y, double blob_sigma, std::size_t resolution) {
  if (!finite(x) || !finite(y) || x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
    throw InvalidArgument("render_blob: position must be finite and in [0,1]");
  if (!finite(blob_sigma) || blob_sigma <= 0.0) throw InvalidArgument("render_blob: blob_sigma must be positive");
  if (resolution < 8) throw InvalidArgument("render_blob: resolution must be >= 8");
  Image img(1, resolution, resolution);
  const double denom = static_cast<double>(resolution - 1);
  const double two_var = 2.0 * blob_sigma * blob_sigma;
  for (std::size_t r = 0; r < resolution; ++r) {
    const double dy = static_cast<double>(r) / denom - y;
    for (std::size_t c = 0; c < resolution; ++c) {
      const double dx = static_cast<double>(c) / denom - x;
      img.at(0, r, c) = static_cast<float>(std::exp(-(dx * dx + dy * dy) / two_var));
    }
  }
  return img;
}

Image render_sprite(SpriteShape shape, double scale, double rotation, double x, double y,
                    std::size_t resolution) {
  if (static_cast<int>(shape) > 2) throw InvalidArgument("render_sprite: unknown shape index");
  if (!finite(scale) || scale < 0.5 || scale > 1.0) throw InvalidArgument("render_sprite: scale must be in [0.5,1]");
  if (!finite(rotation) || rotation < 0.0 || rotation >= 2.0 * std::numbers::pi)
    throw InvalidArgument("render_sprite: rotation must be in [0,2pi)");
  if (!finite(x) || !finite(y) || x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
    throw InvalidArgument("render_sprite: position must be in [0,1]");
  if (resolution < 8) throw InvalidArgument("render_sprite: resolution must be >= 8");

  const double res = static_cast<double>(resolution);
  const double size = kSpriteSize * scale * res;
  const double cx = x * res, cy = y * res;
  const double cs = std::cos(rotation), sn = std::sin(rotation);
  constexpr int ss = kSupersample;
  constexpr double inv_samples = 1.0 / (ss * ss);

  Image img(1, resolution, resolution);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy) {
        const double dy = static_cast<double>(r) + (sy + 0.5) / ss - cy;
        for (int sx = 0; sx < ss; ++sx) {
          const double dx = static_cast<double>(c) + (sx + 0.5) / ss - cx;
          const double u = (cs * dx + sn * dy) / size;
          const double v = (-sn * dx + cs * dy) / size;
          hits += inside(shape, u, v) ? 1 : 0;
        }
      }
      img.at(0, r, c) = static_cast<float>(hits * inv_samples);
    }
  }
  return img;
}

Image render_sprite(const FactorVector& f, const FactorSpec& spec, std::size_t resolution) {
  if (f.size() != spec.factor_count()) throw InvalidArgument("render_sprite: factor vector length mismatch");
  auto get = [&](const char* name) {
    const auto i = spec.find(name);
    if (i == static_cast<std::size_t>(-1)) throw InvalidArgument(std::string("render_sprite: spec lacks factor ") + name);
    return static_cast<double>(f[i]);
  };
  const double shape = get("shape");
  if (shape < 0.0 || shape > 2.0 || shape != std::floor(shape))
    throw InvalidArgument("render_sprite: unknown shape index");
  return render_sprite(static_cast<SpriteShape>(static_cast<int>(shape)), get("scale"), get("rotation"),
                       get("x"), get("y"), resolution);
}

Image colorize(const Image& img, std::size_t hue_index, std::span<const Rgb> palette) {
  if (img.channels != 1) throw InvalidArgument("colorize: input must be grayscale");
  if (hue_index >= palette.size()) throw InvalidArgument("colorize: hue index out of range");
  const auto& rgb = palette[hue_index];
  Image out(3, img.height, img.width);
  const std::size_t plane = img.height * img.width;
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t p = 0; p < plane; ++p) out.pixels[ch * plane + p] = img.pixels[p] * rgb[ch];
  return out;
}

Dataset::Dataset(Renderer renderer, FactorSpec spec, std::size_t channels, std::size_t height,
                 std::size_t width, std::vector<float> pixels)
    : renderer_(renderer),
      spec_(std::move(spec)),
      channels_(channels),
      height_(height),
      width_(width),
      pixels_(std::move(pixels)) {
  spec_.validate();
  if (channels_ == 0 || height_ == 0 || width_ == 0) throw InvalidArgument("dataset: image dimensions must be positive");
  count_ = spec_.total();
  if (pixels_.size() != count_ * image_size())
    throw InvalidArgument("dataset: payload holds " + std::to_string(pixels_.size()) + " values, expected " +
                          std::to_string(count_ * image_size()));
}

std::span<const float> Dataset::pixels(std::size_t index) const {
  if (index >= count_) throw InvalidArgument("dataset index out of range");
  return std::span<const float>(pixels_).subspan(index * image_size(), image_size());
}

Image Dataset::image(std::size_t index) const {
  Image img(channels_, height_, width_);
  const auto px = pixels(index);
  std::copy(px.begin(), px.end(), img.pixels.begin());
  return img;
}

std::vector<std::size_t> Dataset::factor_indices(std::size_t index) const {
  if (index >= count_) throw InvalidArgument("dataset index out of range");
  std::vector<std::size_t> idx(spec_.factor_count());
  for (std::size_t i = idx.size(); i-- > 0;) {
    idx[i] = index % spec_.cardinality(i);
    index /= spec_.cardinality(i);
  }
  return idx;
}

FactorVector Dataset::factors(std::size_t index) const {
  const auto idx = factor_indices(index);
  FactorVector f(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) f[i] = spec_.grids[i][idx[i]];
  return f;
}

Dataset enumerate_dataset(const FactorSpec& spec, Renderer renderer, std::size_t resolution) {
  spec.validate();
  if (resolution < 8) throw InvalidArgument("enumerate_dataset: resolution must be >= 8");
  const auto& required = required_factors(renderer);
  if (spec.factor_count() != required.size())
    throw InvalidArgument("enumerate_dataset: " + to_string(renderer) + " renderer expects " +
                          std::to_string(required.size()) + " factors, spec has " +
                          std::to_string(spec.factor_count()));
  for (const auto& name : required)
    if (spec.find(name) == static_cast<std::size_t>(-1))
      throw InvalidArgument("enumerate_dataset: spec lacks factor " + name);

  const std::size_t channels = channels_for(renderer);
  const std::size_t image_size = channels * resolution * resolution;
  const std::size_t count = spec.total();
  std::vector<float> pixels(count * image_size);

  const auto& palette = default_palette();
  FactorVector f(spec.factor_count());
  for (std::size_t n = 0; n < count; ++n) {
    for (std::size_t i = f.size(), rest = n; i-- > 0;) {
      f[i] = spec.grids[i][rest % spec.cardinality(i)];
      rest /= spec.cardinality(i);
    }
    Image img;
    if (renderer == Renderer::blob) {
      img = render_blob(f[spec.find("x")], f[spec.find("y")], kBlobSigma, resolution);
    } else {
      img = render_sprite(f, spec, resolution);
      if (renderer == Renderer::coloured_sprite) {
        const double hue = f[spec.find("hue")];
        if (hue < 0.0 || hue != std::floor(hue)) throw InvalidArgument("enumerate_dataset: hue must be an index");
        img = colorize(img, static_cast<std::size_t>(hue), palette);
      }
    }
    std::copy(img.pixels.begin(), img.pixels.end(), pixels.begin() + static_cast<std::ptrdiff_t>(n * image_size));
  }
  return Dataset(renderer, spec, channels, resolution, resolution, std::move(pixels));
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.raw("CAPD");
  w.u16(kDatasetVersion);
  w.u8(static_cast<std::uint8_t>(d.renderer()));
  w.u8(static_cast<std::uint8_t>(d.channels()));
  w.u16(static_cast<std::uint16_t>(d.height()));
  w.u16(static_cast<std::uint16_t>(d.width()));
  const auto& spec = d.spec();
  w.u8(static_cast<std::uint8_t>(spec.factor_count()));
  for (std::size_t i = 0; i < spec.factor_count(); ++i) {
    w.short_string(spec.names[i], "factor name");
    w.u32(static_cast<std::uint32_t>(spec.cardinality(i)));
    for (auto v : spec.grids[i]) w.f32(v);
  }
  w.u64(d.size());
  for (auto v : d.payload()) w.f32(v);
  w.save(path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  if (r.raw(4, "magic") != "CAPD") throw FormatError("bad magic: not a CAPD dataset: " + path.string());
  const auto version = r.u16("version");
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const auto renderer_id = r.u8("renderer id");
  if (renderer_id > 2) throw FormatError("unknown renderer id " + std::to_string(renderer_id));
  const auto renderer = static_cast<Renderer>(renderer_id);
  const std::size_t channels = r.u8("channels");
  if (channels != channels_for(renderer)) throw FormatError("channels field inconsistent with renderer id");
  const std::size_t height = r.u16("height");
  const std::size_t width = r.u16("width");
  if (height == 0 || width == 0) throw FormatError("height/width must be positive");

  FactorSpec spec;
  const auto factors = r.u8("factor count");
  if (factors == 0) throw FormatError("factor count must be positive");
  for (std::uint8_t i = 0; i < factors; ++i) {
    spec.names.push_back(r.short_string("factor name"));
    const auto card = r.u32("cardinality of " + spec.names.back());
    if (card == 0) throw FormatError("cardinality of " + spec.names.back() + " must be positive");
    if (static_cast<std::size_t>(card) * 4 > r.remaining())
      throw FormatError("truncated file while reading grid of " + spec.names.back());
    std::vector<float> grid(card);
    r.f32_array(grid.data(), card, "grid of " + spec.names.back());
    spec.grids.push_back(std::move(grid));
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid factor spec: ") + e.what());
  }

  const auto count = r.u64("pair count");
  if (count != spec.total())
    throw FormatError("pair count " + std::to_string(count) + " inconsistent with factor cardinalities (" +
                      std::to_string(spec.total()) + ")");
  const std::size_t values = static_cast<std::size_t>(count) * channels * height * width;
  if (r.remaining() != values * 4)
    throw FormatError("pixel payload length " + std::to_string(r.remaining()) + " bytes, expected " +
                      std::to_string(values * 4));
  std::vector<float> pixels(values);
  r.f32_array(pixels.data(), values, "pixel payload");
  return Dataset(renderer, std::move(spec), channels, height, width, std::move(pixels));
}

}  // namespace capvae::synth
