#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "capvae/synthdata.hpp"
#include "capvae/vae_model.hpp"

namespace capvae::diag {

using synth::Image;

// 8-bit PNG (gray or RGB) with no timestamp chunk, so equal images give equal bytes.
std::vector<std::uint8_t> encode_png(const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);

// count values evenly spaced over [lo, hi]
std::vector<double> traversal_values(std::size_t count = 11, double lo = -3.0, double hi = 3.0);

// Posterior means for a list of dataset entries, [indices.size()][n_latents].
std::vector<std::vector<double>> posterior_means(vae::VaeModel<float>& model, const synth::Dataset& data,
                                                 std::span<const std::size_t> indices);

// sigmoid(decoder(mean(x)))
Image reconstruct(vae::VaeModel<float>& model, const Image& x);

// Decodes the seed's posterior mean with coordinate `latent` replaced by each value.
std::vector<Image> latent_traversal(vae::VaeModel<float>& model, const Image& seed, std::size_t latent,
                                    std::span<const double> values);

// Largest mean absolute pixel difference over all pairs of images in a row.
double row_variation(std::span<const Image> row);

// Per-latent KL against the prior averaged over the listed entries.
std::vector<double> average_kl(vae::VaeModel<float>& model, const synth::Dataset& data,
                               std::span<const std::size_t> indices);

// Latent indices by descending KL; equal values keep ascending index order.
std::vector<std::size_t> order_by_kl(std::span<const double> kl);
std::vector<std::size_t> kl_ordering(vae::VaeModel<float>& model, const synth::Dataset& data,
                                     std::span<const std::size_t> indices);

struct TraversalGrid {
  Image seed;
  std::vector<Image> samples;          // header row 1
  std::vector<Image> reconstructions;  // header row 2
  std::vector<std::size_t> ordering;   // latent shown in each traversal row
  std::vector<double> values;
  std::vector<std::vector<Image>> rows;
};

// Header rows use `sample_indices` (one per column); traversal rows follow
// `ordering` and start from the posterior mean of dataset entry `seed_index`.
TraversalGrid make_traversal_grid(vae::VaeModel<float>& model, const synth::Dataset& data, std::size_t seed_index,
                                  std::span<const std::size_t> sample_indices, std::vector<std::size_t> ordering,
                                  std::vector<double> values);

inline constexpr std::size_t kGutter = 2;

// Tiles images row-major with white gutters between and around cells.
Image tile(const std::vector<std::vector<Image>>& rows, std::size_t gutter = kGutter);
Image render_traversal_grid(const TraversalGrid& grid);

struct TuningHeatmap {
  std::size_t latent = 0;
  std::size_t rows = 0;  // y grid
  std::size_t cols = 0;  // x grid
  std::vector<double> mean;

  double at(std::size_t r, std::size_t c) const { return mean[r * cols + c]; }
};

// Posterior mean of every latent over the x/y grid of a dataset whose only
// factors are x and y.
std::vector<TuningHeatmap> position_tuning_heatmap(vae::VaeModel<float>& model, const synth::Dataset& data);

// Blue at -3, white at 0, red at +3; values outside are clipped.
synth::Rgb diverging_color(double v);
Image render_heatmap(const TuningHeatmap& map, std::size_t cell = 4);

struct MetricsTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // npos when absent
  std::vector<double> series(const std::string& name) const;
};

// Throws FormatError naming the 1-based line of the first malformed row.
MetricsTable read_metrics_csv(const std::filesystem::path& path);
MetricsTable parse_metrics_csv(const std::string& text);

// Aligned series for KL-vs-iteration and KL-vs-reconstruction plots. Works on
// both the VAE and the generator log layouts.
struct CapacityCurves {
  std::vector<double> iteration;
  std::vector<double> capacity;
  std::vector<double> total_kl;
  std::vector<double> loglik;  // nats / sample
  std::vector<std::string> names;
  std::vector<std::vector<double>> kl;  // one series per name
};

CapacityCurves capacity_curves(const MetricsTable& table);
// Writes kl_vs_iteration.csv and kl_vs_loglik.csv into `dir`.
void write_capacity_curves(const CapacityCurves& curves, const std::filesystem::path& dir);

// Spearman rank correlation with average ranks for ties; 0 when either input
// is constant.
double spearman(std::span<const double> a, std::span<const double> b);

struct Match {
  std::size_t latent = 0;
  std::size_t factor = 0;
  double abs_rho = 0.0;
};

struct Alignment {
  std::vector<std::string> factor_names;
  std::vector<std::vector<double>> abs_rho;  // [latent][factor]
  std::vector<Match> matches;                // greedy, descending |rho|
};

// codes: [samples][latents], factors: [samples][factors].
Alignment align(const std::vector<std::vector<double>>& codes, const std::vector<std::vector<double>>& factors,
                std::vector<std::string> factor_names);
Alignment factor_alignment_score(vae::VaeModel<float>& model, const synth::Dataset& data);
void write_alignment_csv(const Alignment& a, const std::filesystem::path& path);

}  // namespace capvae::diag
