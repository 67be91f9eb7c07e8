#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "capvae/diagnostics.hpp"
#include "capvae/error.hpp"
#include "test_support.hpp"

using namespace capvae;
using namespace capvae::diag;
using capvae::testing::TempDir;

namespace {

const synth::Dataset& blobs() {
  static const auto d = synth::enumerate_dataset(synth::blob_spec(6), synth::Renderer::blob, 16);
  return d;
}

vae::ModelConfig tiny_dense() {
  auto c = vae::ModelConfig::dense_blob(16);
  c.hidden = {24};
  c.n_latents = 3;
  return c;
}

void zero_parameters(vae::VaeModel<float>& m) {
  for (auto* p : m.parameters()) p->value.fill(0.0f);
}

}  // namespace

TEST(Traversal, ValuesAreEvenlySpaced) {
  const auto v = traversal_values();
  ASSERT_EQ(v.size(), 11u);
  EXPECT_DOUBLE_EQ(v.front(), -3.0);
  EXPECT_DOUBLE_EQ(v[5], 0.0);
  EXPECT_DOUBLE_EQ(v.back(), 3.0);
  EXPECT_THROW(traversal_values(1), InvalidArgument);
}

TEST(Traversal, RowHasOneImagePerValue) {
  vae::VaeModel<float> m(tiny_dense(), 1);
  const auto row = latent_traversal(m, blobs().image(7), 1, traversal_values());
  EXPECT_EQ(row.size(), 11u);
  EXPECT_THROW(latent_traversal(m, blobs().image(7), 3, traversal_values()), InvalidArgument);
}

TEST(Traversal, SubstitutingTheInferredMeanReproducesTheReconstruction) {
  vae::VaeModel<float> m(tiny_dense(), 2);
  const auto seed = blobs().image(11);
  const std::size_t idx[] = {11};
  const auto mean = posterior_means(m, blobs(), idx)[0];
  const std::vector<double> at_mean{mean[2]};
  const auto row = latent_traversal(m, seed, 2, at_mean);
  EXPECT_EQ(row[0], reconstruct(m, seed));
}

TEST(Traversal, RowVariation) {
  synth::Image a(1, 1, 2, 0.0f), b(1, 1, 2, 0.0f), c(1, 1, 2, 0.0f);
  b.pixels = {0.5f, 0.0f};
  c.pixels = {1.0f, 1.0f};
  const std::vector<synth::Image> row{a, b, c};
  EXPECT_DOUBLE_EQ(row_variation(row), 1.0);
  const std::vector<synth::Image> flat{a, a};
  EXPECT_DOUBLE_EQ(row_variation(flat), 0.0);
}

TEST(KlOrdering, DescendingWithStableTies) {
  EXPECT_EQ(order_by_kl(std::vector<double>{0.1, 3.0, 0.1, 2.0}), (std::vector<std::size_t>{1, 3, 0, 2}));
  EXPECT_EQ(order_by_kl(std::vector<double>(4, 0.0)), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(KlOrdering, ZeroKlModelGivesIdentity) {
  vae::VaeModel<float> m(tiny_dense(), 3);
  zero_parameters(m);
  const std::size_t idx[] = {0, 5, 9};
  const auto kl = average_kl(m, blobs(), idx);
  for (double k : kl) EXPECT_EQ(k, 0.0);
  EXPECT_EQ(kl_ordering(m, blobs(), idx), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(average_kl(m, blobs(), std::span<const std::size_t>{}), InvalidArgument);
}

TEST(TraversalGrid, LayoutHasTwoHeaderRows) {
  vae::VaeModel<float> m(tiny_dense(), 4);
  const std::vector<std::size_t> samples{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto grid = make_traversal_grid(m, blobs(), 3, samples, {2, 0, 1}, traversal_values());
  EXPECT_EQ(grid.rows.size(), 3u);
  const auto img = render_traversal_grid(grid);
  EXPECT_EQ(img.height, 5 * (16 + kGutter) + kGutter);
  EXPECT_EQ(img.width, 11 * (16 + kGutter) + kGutter);
  EXPECT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_THROW(make_traversal_grid(m, blobs(), 99, samples, {0}, traversal_values()), InvalidArgument);
}

TEST(Tile, PlacesCellsBetweenWhiteGutters) {
  synth::Image a(1, 2, 2, 0.0f);
  const auto t = tile({{a, a}, {a}}, 1);
  EXPECT_EQ(t.height, 7u);
  EXPECT_EQ(t.width, 7u);
  EXPECT_EQ(t.at(0, 1, 1), 0.0f);
  EXPECT_EQ(t.at(0, 3, 3), 1.0f);
  EXPECT_EQ(t.at(0, 4, 4), 1.0f);  // missing cell stays white
  EXPECT_THROW(tile({{a, synth::Image(1, 3, 3)}}), ShapeError);
}

TEST(Heatmap, ZeroMeanModelRendersWhite) {
  vae::VaeModel<float> m(tiny_dense(), 5);
  zero_parameters(m);
  const auto maps = position_tuning_heatmap(m, blobs());
  ASSERT_EQ(maps.size(), 3u);
  EXPECT_EQ(maps[0].rows, 6u);
  const auto img = render_heatmap(maps[1], 3);
  EXPECT_EQ(img.channels, 3u);
  EXPECT_EQ(img.width, 18u);
  for (float v : img.pixels) EXPECT_EQ(v, 1.0f);
}

TEST(Heatmap, CellsFollowFactorGrid) {
  vae::VaeModel<float> m(tiny_dense(), 6);
  const auto maps = position_tuning_heatmap(m, blobs());
  std::vector<std::size_t> all(blobs().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto mu = posterior_means(m, blobs(), all);
  for (std::size_t i = 0; i < blobs().size(); ++i) {
    const auto fi = blobs().factor_indices(i);  // x then y
    EXPECT_EQ(maps[0].at(fi[1], fi[0]), mu[i][0]);
  }
}

TEST(Heatmap, RequiresExactlyPositionFactors) {
  vae::ModelConfig c = tiny_dense();
  const auto sprites = synth::enumerate_dataset(synth::sprite_spec(1, 1, 1, 2, 2), synth::Renderer::sprite, 16);
  vae::VaeModel<float> m(c, 7);
  EXPECT_THROW(position_tuning_heatmap(m, sprites), InvalidArgument);
}

TEST(Heatmap, DivergingColorAnchors) {
  EXPECT_EQ(diverging_color(0.0), (synth::Rgb{1, 1, 1}));
  EXPECT_EQ(diverging_color(3.0), (synth::Rgb{1, 0, 0}));
  EXPECT_EQ(diverging_color(-9.0), (synth::Rgb{0, 0, 1}));
}

TEST(MetricsCsv, ParsesAndReportsLineNumbers) {
  const auto t = parse_metrics_csv("iter,loss,C\n0,1.5,0\n1,1.25,0.5\n");
  EXPECT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.series("loss"), (std::vector<double>{1.5, 1.25}));
  EXPECT_EQ(t.column("nope"), synth::FactorSpec::npos);
  EXPECT_THROW(t.series("nope"), FormatError);
  try {
    parse_metrics_csv("iter,loss\n0,1\n1,abc\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 3:", 0), 0u) << e.what();
  }
  try {
    parse_metrics_csv("iter,loss\n0,1,2\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 2:", 0), 0u) << e.what();
  }
  EXPECT_THROW(parse_metrics_csv(""), FormatError);
}

TEST(CapacityCurves, HandlesBothLayouts) {
  const auto vae_curves = capacity_curves(parse_metrics_csv("iter,loss,loglik,kl_total,C,kl_0,kl_1,seconds\n"
                                                            "0,5,-4,1,0.5,0.25,0.75,0\n"));
  EXPECT_EQ(vae_curves.names, (std::vector<std::string>{"0", "1"}));
  EXPECT_EQ(vae_curves.total_kl, (std::vector<double>{1.0}));
  const auto gen = capacity_curves(
      parse_metrics_csv("step,C,total_kl,kl_x,kl_y,recon_loglik\n100,1,1,0.5,0.5,-30\n200,2,2,1,1,-20\n"));
  EXPECT_EQ(gen.names, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(gen.loglik, (std::vector<double>{-30, -20}));
  for (const auto& s : gen.kl) EXPECT_EQ(s.size(), gen.iteration.size());

  TempDir dir;
  write_capacity_curves(gen, dir.path());
  std::ifstream in(dir / "kl_vs_iteration.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("kl_x"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "kl_vs_loglik.csv"));
}

TEST(Spearman, PerfectAndConstantAndTies) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{10, 20, 30, 40, 50}, c{5, 4, 3, 2, 1}, k{2, 2, 2, 2, 2};
  EXPECT_DOUBLE_EQ(spearman(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, c), -1.0);
  EXPECT_EQ(spearman(a, k), 0.0);
  EXPECT_EQ(spearman(k, k), 0.0);
  const std::vector<double> t1{1, 2, 2, 3}, t2{1, 2, 2, 3};
  EXPECT_NEAR(spearman(t1, t2), 1.0, 1e-12);
  EXPECT_THROW(spearman(a, t1), ShapeError);
}

TEST(Spearman, IndependentNoiseIsNearZero) {
  CounterRng rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(2000), y(2000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal(), y[i] = rng.uniform();
    EXPECT_LT(std::abs(spearman(x, y)), 0.1);
  }
}

TEST(Alignment, GreedyMatchingIsOneToOne) {
  CounterRng rng(52);
  std::vector<std::vector<double>> codes, factors;
  for (int i = 0; i < 300; ++i) {
    const double fx = rng.uniform(), fy = rng.uniform();
    factors.push_back({fx, fy});
    // latent 2 tracks x, latent 0 tracks y and a bit of x, latent 1 is noise.
    codes.push_back({fy + 0.2 * fx, rng.normal(), -3.0 * fx});
  }
  const auto a = align(codes, factors, {"x", "y"});
  ASSERT_EQ(a.matches.size(), 2u);
  EXPECT_EQ(a.matches[0].latent, 2u);
  EXPECT_EQ(a.matches[0].factor, 0u);
  EXPECT_NEAR(a.matches[0].abs_rho, 1.0, 1e-12);
  EXPECT_EQ(a.matches[1].latent, 0u);
  EXPECT_EQ(a.matches[1].factor, 1u);
  EXPECT_EQ(a.abs_rho.size(), 3u);
  EXPECT_THROW(align(codes, factors, {"x"}), ShapeError);

  TempDir dir;
  write_alignment_csv(a, dir / "alignment.csv");
  std::ifstream in(dir / "alignment.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("x"), std::string::npos);
}

TEST(Png, DeterministicWithSignature) {
  synth::Image img(3, 5, 7, 0.25f);
  img.at(1, 2, 3) = 1.0f;
  const auto a = encode_png(img), b = encode_png(img);
  EXPECT_EQ(a, b);
  ASSERT_GT(a.size(), 8u);
  const std::uint8_t sig[] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  EXPECT_TRUE(std::equal(sig, sig + 8, a.begin()));
  EXPECT_EQ(std::search(a.begin(), a.end(), std::begin("tIME"), std::begin("tIME") + 4), a.end());
  EXPECT_THROW(encode_png(synth::Image(2, 3, 3)), InvalidArgument);
}

TEST(Png, WriteToUnwritablePathIsIoError) {
  TempDir dir;
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(write_png(dir / "file" / "x.png", synth::Image(1, 2, 2)), IoError);
}
