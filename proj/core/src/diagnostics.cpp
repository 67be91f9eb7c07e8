#include "capvae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "capvae/error.hpp"

namespace capvae::diag {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kChunk = 256;

nn::Tensor stack(const synth::Dataset& data, std::span<const std::size_t> indices) {
  nn::Tensor x(nn::Shape{indices.size(), data.channels(), data.height(), data.width()}, 0.0f);
  const std::size_t n = data.image_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size())
      throw InvalidArgument("dataset index " + std::to_string(indices[i]) + " out of range");
    const auto px = data.pixels(indices[i]);
    std::copy(px.begin(), px.end(), x.data() + i * n);
  }
  return x;
}

nn::Tensor as_batch(const Image& img) {
  return nn::Tensor(nn::Shape{1, img.channels, img.height, img.width}, img.pixels);
}

std::vector<Image> sigmoid_images(const nn::Tensor& logits) {
  const std::size_t b = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  std::vector<Image> out;
  out.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    Image img(c, h, w);
    for (std::size_t k = 0; k < img.pixels.size(); ++k)
      img.pixels[k] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(logits[i * c * h * w + k]))));
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<std::size_t> all_indices(const synth::Dataset& data) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

std::vector<double> traversal_values(std::size_t count, double lo, double hi) {
  if (count < 2) throw InvalidArgument("traversal needs at least two values");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

std::vector<std::vector<double>> posterior_means(vae::VaeModel<float>& model, const synth::Dataset& data,
                                                 std::span<const std::size_t> indices) {
  std::vector<std::vector<double>> out;
  out.reserve(indices.size());
  const std::size_t n = model.config().n_latents;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const auto chunk = indices.subspan(start, std::min(kChunk, indices.size() - start));
    const auto post = model.infer(stack(data, chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i)
      out.emplace_back(post.mu.data() + i * n, post.mu.data() + (i + 1) * n);
  }
  return out;
}

Image reconstruct(vae::VaeModel<float>& model, const Image& x) {
  const auto post = model.infer(as_batch(x));
  return sigmoid_images(model.decode_logits(post.mu)).front();
}

std::vector<Image> latent_traversal(vae::VaeModel<float>& model, const Image& seed, std::size_t latent,
                                    std::span<const double> values) {
  const std::size_t n = model.config().n_latents;
  if (latent >= n)
    throw InvalidArgument("latent index " + std::to_string(latent) + " out of range for " + std::to_string(n) +
                          " latents");
  if (values.empty()) throw InvalidArgument("traversal needs at least one value");
  const auto post = model.infer(as_batch(seed));
  nn::Tensor z(nn::Shape{values.size(), n}, 0.0f);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::copy(post.mu.data(), post.mu.data() + n, z.data() + i * n);
    z[i * n + latent] = static_cast<float>(values[i]);
  }
  return sigmoid_images(model.decode_logits(z));
}

double row_variation(std::span<const Image> row) {
  double worst = 0.0;
  for (std::size_t a = 0; a < row.size(); ++a)
    for (std::size_t b = a + 1; b < row.size(); ++b) {
      if (row[a].pixels.size() != row[b].pixels.size()) throw ShapeError("row_variation: image sizes differ");
      double s = 0.0;
      for (std::size_t k = 0; k < row[a].pixels.size(); ++k) s += std::abs(row[a].pixels[k] - row[b].pixels[k]);
      worst = std::max(worst, s / static_cast<double>(row[a].pixels.size()));
    }
  return worst;
}

std::vector<double> average_kl(vae::VaeModel<float>& model, const synth::Dataset& data,
                               std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("kl ordering needs a non-empty sample");
  const std::size_t n = model.config().n_latents;
  std::vector<double> kl(n, 0.0);
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const auto chunk = indices.subspan(start, std::min(kChunk, indices.size() - start));
    const auto post = model.infer(stack(data, chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double m = post.mu[i * n + j], ls = post.log_sigma[i * n + j];
        kl[j] += 0.5 * (m * m + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
      }
  }
  for (auto& v : kl) v /= static_cast<double>(indices.size());
  return kl;
}

std::vector<std::size_t> order_by_kl(std::span<const double> kl) {
  std::vector<std::size_t> order(kl.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return kl[a] > kl[b]; });
  return order;
}

std::vector<std::size_t> kl_ordering(vae::VaeModel<float>& model, const synth::Dataset& data,
                                     std::span<const std::size_t> indices) {
  return order_by_kl(average_kl(model, data, indices));
}

TraversalGrid make_traversal_grid(vae::VaeModel<float>& model, const synth::Dataset& data, std::size_t seed_index,
                                  std::span<const std::size_t> sample_indices, std::vector<std::size_t> ordering,
                                  std::vector<double> values) {
  if (seed_index >= data.size()) throw InvalidArgument("seed index out of range");
  TraversalGrid g;
  g.seed = data.image(seed_index);
  for (std::size_t i : sample_indices) {
    if (i >= data.size()) throw InvalidArgument("sample index out of range");
    g.samples.push_back(data.image(i));
    g.reconstructions.push_back(reconstruct(model, g.samples.back()));
  }
  g.ordering = std::move(ordering);
  g.values = std::move(values);
  for (std::size_t latent : g.ordering) g.rows.push_back(latent_traversal(model, g.seed, latent, g.values));
  return g;
}

Image tile(const std::vector<std::vector<Image>>& rows, std::size_t gutter) {
  std::size_t cols = 0, ch = 1, h = 0, w = 0;
  for (const auto& r : rows) {
    cols = std::max(cols, r.size());
    for (const auto& img : r) {
      if (h == 0) ch = img.channels, h = img.height, w = img.width;
      if (img.channels != ch || img.height != h || img.width != w) throw ShapeError("tile: image sizes differ");
    }
  }
  if (rows.empty() || cols == 0) throw InvalidArgument("tile: nothing to draw");
  const std::size_t H = rows.size() * (h + gutter) + gutter;
  const std::size_t W = cols * (w + gutter) + gutter;
  Image out(ch, H, W, 1.0f);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto& img = rows[r][c];
      const std::size_t y0 = gutter + r * (h + gutter), x0 = gutter + c * (w + gutter);
      for (std::size_t k = 0; k < ch; ++k)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) out.at(k, y0 + y, x0 + x) = img.at(k, y, x);
    }
  return out;
}

Image render_traversal_grid(const TraversalGrid& grid) {
  std::vector<std::vector<Image>> rows;
  if (!grid.samples.empty()) {
    rows.push_back(grid.samples);
    rows.push_back(grid.reconstructions);
  }
  for (const auto& r : grid.rows) rows.push_back(r);
  return tile(rows);
}

std::vector<TuningHeatmap> position_tuning_heatmap(vae::VaeModel<float>& model, const synth::Dataset& data) {
  const auto& spec = data.spec();
  const std::size_t xi = spec.find("x"), yi = spec.find("y");
  if (spec.factor_count() != 2 || xi == synth::FactorSpec::npos || yi == synth::FactorSpec::npos)
    throw InvalidArgument("position tuning needs a dataset whose factors are exactly x and y");
  const std::size_t rows = spec.cardinality(yi), cols = spec.cardinality(xi);
  const auto idx = all_indices(data);
  const auto mu = posterior_means(model, data, idx);
  const std::size_t n = model.config().n_latents;
  std::vector<TuningHeatmap> maps(n);
  for (std::size_t k = 0; k < n; ++k) {
    maps[k].latent = k;
    maps[k].rows = rows;
    maps[k].cols = cols;
    maps[k].mean.assign(rows * cols, 0.0);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto fi = data.factor_indices(i);
    for (std::size_t k = 0; k < n; ++k) maps[k].mean[fi[yi] * cols + fi[xi]] = mu[i][k];
  }
  return maps;
}

synth::Rgb diverging_color(double v) {
  const double t = std::clamp(v, -3.0, 3.0) / 3.0;
  if (t < 0.0) return {static_cast<float>(1.0 + t), static_cast<float>(1.0 + t), 1.0f};
  return {1.0f, static_cast<float>(1.0 - t), static_cast<float>(1.0 - t)};
}

Image render_heatmap(const TuningHeatmap& map, std::size_t cell) {
  if (cell == 0) throw InvalidArgument("heatmap cell size must be positive");
  Image out(3, map.rows * cell, map.cols * cell);
  for (std::size_t r = 0; r < map.rows; ++r)
    for (std::size_t c = 0; c < map.cols; ++c) {
      const auto rgb = diverging_color(map.at(r, c));
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t dy = 0; dy < cell; ++dy)
          for (std::size_t dx = 0; dx < cell; ++dx) out.at(k, r * cell + dy, c * cell + dx) = rgb[k];
    }
  return out;
}

std::size_t MetricsTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? synth::FactorSpec::npos : static_cast<std::size_t>(it - header.begin());
}

std::vector<double> MetricsTable::series(const std::string& name) const {
  const std::size_t c = column(name);
  if (c == synth::FactorSpec::npos) throw FormatError("metrics table has no column " + name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

MetricsTable parse_metrics_csv(const std::string& text) {
  MetricsTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      for (const auto& h : t.header)
        if (h.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty column name");
      continue;
    }
    if (cells.size() != t.header.size())
      throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                        " fields, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != c.size() || !std::isfinite(v))
        throw FormatError("line " + std::to_string(lineno) + ": not a finite number: '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw FormatError("line 1: missing header");
  return t;
}

MetricsTable read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_metrics_csv(ss.str());
}

CapacityCurves capacity_curves(const MetricsTable& table) {
  CapacityCurves c;
  const bool generator = table.column("step") != synth::FactorSpec::npos;
  c.iteration = table.series(generator ? "step" : "iter");
  c.capacity = table.series("C");
  c.total_kl = table.series(generator ? "total_kl" : "kl_total");
  c.loglik = table.series(generator ? "recon_loglik" : "loglik");
  for (const auto& h : table.header)
    if (h.rfind("kl_", 0) == 0 && h != "kl_total") {
      c.names.push_back(h.substr(3));
      c.kl.push_back(table.series(h));
    }
  return c;
}

namespace {

void write_series(const fs::path& path, const std::string& x_name, const std::vector<double>& x,
                  const CapacityCurves& c, bool with_capacity) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(9);
  out << x_name;
  if (with_capacity) out << ",C";
  out << ",total_kl";
  for (const auto& n : c.names) out << ",kl_" << n;
  out << "\n";
  for (std::size_t i = 0; i < x.size(); ++i) {
    out << x[i];
    if (with_capacity) out << "," << c.capacity[i];
    out << "," << c.total_kl[i];
    for (const auto& s : c.kl) out << "," << s[i];
    out << "\n";
  }
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

void write_capacity_curves(const CapacityCurves& curves, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  write_series(dir / "kl_vs_iteration.csv", "iteration", curves.iteration, curves, true);
  write_series(dir / "kl_vs_loglik.csv", "recon_loglik_nats", curves.loglik, curves, false);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("spearman: series lengths differ");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

Alignment align(const std::vector<std::vector<double>>& codes, const std::vector<std::vector<double>>& factors,
                std::vector<std::string> factor_names) {
  if (codes.size() != factors.size()) throw ShapeError("align: code and factor sample counts differ");
  if (codes.empty()) throw InvalidArgument("align: empty sample");
  const std::size_t L = codes.front().size(), F = factors.front().size();
  if (factor_names.size() != F) throw ShapeError("align: factor name count mismatch");
  std::vector<std::vector<double>> lat(L, std::vector<double>(codes.size()));
  std::vector<std::vector<double>> fac(F, std::vector<double>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i].size() != L || factors[i].size() != F) throw ShapeError("align: ragged input");
    for (std::size_t l = 0; l < L; ++l) lat[l][i] = codes[i][l];
    for (std::size_t f = 0; f < F; ++f) fac[f][i] = factors[i][f];
  }
  Alignment a;
  a.factor_names = std::move(factor_names);
  a.abs_rho.assign(L, std::vector<double>(F, 0.0));
  std::vector<Match> pairs;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t f = 0; f < F; ++f) {
      a.abs_rho[l][f] = std::abs(spearman(lat[l], fac[f]));
      pairs.push_back({l, f, a.abs_rho[l][f]});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Match& x, const Match& y) { return x.abs_rho > y.abs_rho; });
  std::vector<bool> used_l(L, false), used_f(F, false);
  for (const auto& p : pairs) {
    if (used_l[p.latent] || used_f[p.factor]) continue;
    used_l[p.latent] = used_f[p.factor] = true;
    a.matches.push_back(p);
  }
  return a;
}

Alignment factor_alignment_score(vae::VaeModel<float>& model, const synth::Dataset& data) {
  const auto idx = all_indices(data);
  const auto codes = posterior_means(model, data, idx);
  std::vector<std::vector<double>> factors;
  factors.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = data.factors(i);
    factors.emplace_back(f.begin(), f.end());
  }
  return align(codes, factors, data.spec().names);
}

void write_alignment_csv(const Alignment& a, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(6);
  out << "latent";
  for (const auto& n : a.factor_names) out << "," << n;
  out << ",matched_factor\n";
  for (std::size_t l = 0; l < a.abs_rho.size(); ++l) {
    out << l;
    for (double v : a.abs_rho[l]) out << "," << v;
    std::string matched;
    for (const auto& m : a.matches)
      if (m.latent == l) matched = a.factor_names[m.factor];
    out << "," << matched << "\n";
  }
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace capvae::diag
