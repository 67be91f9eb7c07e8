#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "capvae/diagnostics.hpp"
#include "capvae/error.hpp"
#include "capvae/synthdata.hpp"
#include "capvae/trainer.hpp"

namespace capvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags registered as strings so a command can tell given flags from
// defaults; values are resolved as defaults < config file < flags.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& help, json defaults)
      : app_(parent.add_subcommand(name, help)), defaults_(std::move(defaults)) {
    add("config", "JSON file with values for any of this command's flags");
  }

  CLI::Option* add(const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    auto* opt = app_->add_option(flag, values_[key], help);
    flags_.emplace_back(key, opt);
    return opt;
  }

  CLI::App* app() const { return app_; }
  bool selected() const { return app_->parsed(); }

  json resolve() const {
    json j = defaults_;
    const auto config = given("config");
    if (config) {
      std::ifstream in(*config);
      if (!in) throw IoError("cannot open config file " + *config);
      json file;
      try {
        in >> file;
      } catch (const json::exception& e) {
        throw InvalidArgument("malformed config file " + *config + ": " + e.what());
      }
      if (!file.is_object()) throw InvalidArgument("config file must hold a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (!j.contains(key)) throw InvalidArgument("unknown config field: " + key);
        j[key] = value;
      }
    }
    const json flags = given_flags();
    for (const auto& [key, value] : flags.items()) j[key] = value;
    return j;
  }

  // Only the flags present on the command line, typed like their defaults.
  json given_flags() const {
    json j = json::object();
    for (const auto& [key, _] : flags_) {
      if (key == "config") continue;
      if (const auto v = given(key)) j[key] = convert(key, *v, defaults_.value(key, json()));
    }
    return j;
  }

  std::optional<std::string> given(const std::string& key) const {
    for (const auto& [k, opt] : flags_)
      if (k == key && opt->count() > 0) return values_.at(key);
    return std::nullopt;
  }

 private:
  static json convert(const std::string& key, const std::string& text, const json& like) {
    try {
      std::size_t used = 0;
      if (like.is_number_unsigned()) {
        if (!text.empty() && text.front() == '-') throw std::invalid_argument(text);
        const auto v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      }
      if (like.is_number_integer()) {
        const auto v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      }
      if (like.is_number_float()) {
        const auto v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      }
      if (like.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw std::invalid_argument(text);
      }
    } catch (const std::exception&) {
      throw InvalidArgument("invalid value for --" + key + ": " + text);
    }
    return text;
  }

  CLI::App* app_;
  json defaults_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> flags_;
};

template <typename T>
T get(const json& j, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw InvalidArgument("missing required value: " + key);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw InvalidArgument("wrong type for " + key);
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

fs::path prepare_out_dir(const json& j) {
  const fs::path dir = get<std::string>(j, "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
  return dir;
}

fs::path model_json_for(const json& j) {
  const auto it = j.find("model");
  if (it != j.end() && !it->is_null()) return it->get<std::string>();
  return fs::path(get<std::string>(j, "ckpt")).parent_path() / "model.json";
}

// ---- gen-data -------------------------------------------------------------

json gen_data_defaults() {
  return json{{"config", nullptr}, {"seed", 0ULL},      {"out", nullptr},     {"kind", "blob"},
              {"res", 32ULL},      {"positions", 0ULL}, {"positions_x", 0ULL}, {"positions_y", 0ULL},
              {"shapes", 3ULL},    {"scales", 0ULL},    {"rotations", 8ULL},  {"hues", 6ULL}};
}

int gen_data(const json& j, std::ostream& out) {
  const auto kind = synth::renderer_from_string(get<std::string>(j, "kind"));
  const auto res = get<std::size_t>(j, "res");
  const auto pick = [&](const char* key, std::size_t fallback) {
    const auto v = get<std::size_t>(j, key);
    return v == 0 ? fallback : v;
  };
  synth::FactorSpec spec;
  json resolved = j;
  switch (kind) {
    case synth::Renderer::blob: {
      const auto n = pick("positions", 32);
      spec = synth::blob_spec(n);
      resolved["positions"] = n;
      break;
    }
    case synth::Renderer::sprite: {
      const auto px = pick("positions_x", pick("positions", 16));
      const auto py = pick("positions_y", pick("positions", 16));
      const auto scales = pick("scales", 6);
      spec = synth::sprite_spec(get<std::size_t>(j, "shapes"), scales, get<std::size_t>(j, "rotations"), px, py);
      resolved["positions_x"] = px;
      resolved["positions_y"] = py;
      resolved["scales"] = scales;
      break;
    }
    case synth::Renderer::coloured_sprite: {
      const auto n = pick("positions", 8);
      const auto scales = pick("scales", 4);
      spec = synth::coloured_sprite_spec(get<std::size_t>(j, "hues"), get<std::size_t>(j, "shapes"), scales,
                                         get<std::size_t>(j, "rotations"), n);
      resolved["positions"] = n;
      resolved["scales"] = scales;
      break;
    }
  }
  const fs::path path = get<std::string>(j, "out");
  const auto data = synth::enumerate_dataset(spec, kind, res);
  synth::write_dataset(data, path);
  resolved.erase("config");
  write_json(fs::path(path.string() + ".json"), resolved);
  out << "wrote " << data.size() << " images (" << to_string(kind) << ", " << res << "x" << res << ") to "
      << path.string() << "\n";
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

json train_defaults() {
  return json{{"config", nullptr}, {"seed", 0ULL},         {"out", ""},      {"data", ""},
              {"iterations", 0ULL}, {"experiment", "vae"}, {"resume", ""}};
}

std::string summary(const train::MetricsRecord& m) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "iter " << m.iteration << "  loss " << m.loss << "  loglik " << m.loglik << "  kl " << m.kl_total
     << "  C " << m.capacity;
  if (m.seconds > 0.0) os << "  t " << m.seconds << "s";
  return os.str();
}

int train_cmd(const Command& cmd, std::ostream& out) {
  // The config file holds a full training config; flags override single fields.
  train::TrainConfig cfg;
  if (const auto path = cmd.given("config")) cfg = train::load_config(*path);
  const json flags = cmd.given_flags();
  if (flags.contains("seed")) cfg.seed = flags["seed"].get<std::uint64_t>();
  if (flags.contains("out")) cfg.out_dir = flags["out"].get<std::string>();
  if (flags.contains("data")) cfg.dataset = flags["data"].get<std::string>();
  if (flags.contains("iterations")) cfg.iterations = flags["iterations"].get<std::uint64_t>();
  if (flags.contains("experiment")) cfg.experiment = train::experiment_from_string(flags["experiment"]);

  train::Trainer trainer(cfg);
  if (flags.contains("resume")) {
    trainer.load_checkpoint(flags["resume"].get<std::string>());
    out << "resumed at iteration " << trainer.iteration() << "\n";
  }
  trainer.run({}, [&](const train::MetricsRecord& m) { out << summary(m) << std::endl; });
  out << "wrote " << (cfg.out_dir / "final.capk").string() << "\n";
  return kExitOk;
}

// ---- diagnostics ------------------------------------------------------------

json diag_defaults(json extra) {
  json j{{"config", nullptr}, {"seed", 0ULL}, {"out", nullptr}, {"ckpt", nullptr}, {"data", nullptr},
         {"model", nullptr}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

struct Loaded {
  train::LoadedVae vae;
  synth::Dataset data;
};

Loaded load_inputs(const json& j) {
  Loaded l{train::load_vae(get<std::string>(j, "ckpt"), model_json_for(j)),
           synth::read_dataset(get<std::string>(j, "data"))};
  const auto& m = l.vae.model->config();
  if (m.channels != l.data.channels() || m.height != l.data.height() || m.width != l.data.width())
    throw InvalidArgument("checkpoint input size does not match the dataset images");
  return l;
}

std::vector<std::size_t> draw_indices(CounterRng& rng, std::size_t count, std::size_t n) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

int traverse_cmd(const json& j, std::ostream& out) {
  auto in = load_inputs(j);
  const auto dir = prepare_out_dir(j);
  auto& model = *in.vae.model;
  CounterRng rng(get<std::uint64_t>(j, "seed"));
  const auto values = diag::traversal_values(get<std::size_t>(j, "values"), -3.0, 3.0);
  const auto kl_sample = draw_indices(rng, std::min<std::size_t>(get<std::size_t>(j, "kl_samples"), in.data.size()),
                                      in.data.size());
  const auto kl = diag::average_kl(model, in.data, kl_sample);
  const auto ordering = diag::order_by_kl(kl);
  const auto header = draw_indices(rng, values.size(), in.data.size());
  const auto seed_flag = get<std::int64_t>(j, "seed_index");
  const std::size_t seed_index =
      seed_flag >= 0 ? static_cast<std::size_t>(seed_flag) : static_cast<std::size_t>(rng.below(in.data.size()));
  const auto grid = diag::make_traversal_grid(model, in.data, seed_index, header, ordering, values);
  diag::write_png(dir / "traversal.png", diag::render_traversal_grid(grid));
  json resolved = j;
  resolved.erase("config");
  resolved["seed_index"] = seed_index;
  write_json(dir / "traverse.config.json", resolved);
  write_json(dir / "traversal.json",
             json{{"seed_index", seed_index}, {"sample_indices", header}, {"ordering", ordering},
                  {"average_kl", kl}, {"values", values}});
  out << "wrote " << (dir / "traversal.png").string() << " (" << ordering.size() << " latent rows)\n";
  return kExitOk;
}

int heatmap_cmd(const json& j, std::ostream& out) {
  auto in = load_inputs(j);
  const auto dir = prepare_out_dir(j);
  auto& model = *in.vae.model;
  const auto maps = diag::position_tuning_heatmap(model, in.data);
  std::vector<std::size_t> all(in.data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto ordering = diag::order_by_kl(diag::average_kl(model, in.data, all));
  const auto cell = get<std::size_t>(j, "cell");
  std::vector<std::vector<diag::Image>> row(1);
  for (std::size_t k : ordering) {
    const auto img = diag::render_heatmap(maps[k], cell);
    diag::write_png(dir / ("heatmap_latent" + std::to_string(k) + ".png"), img);
    row.front().push_back(img);
  }
  diag::write_png(dir / "heatmaps.png", diag::tile(row));
  std::ofstream csv(dir / "heatmaps.csv");
  csv.precision(6);
  csv << "latent,row,col,mean\n";
  for (const auto& m : maps)
    for (std::size_t r = 0; r < m.rows; ++r)
      for (std::size_t c = 0; c < m.cols; ++c) csv << m.latent << "," << r << "," << c << "," << m.at(r, c) << "\n";
  if (!csv) throw IoError("cannot write heatmaps.csv");
  json resolved = j;
  resolved.erase("config");
  write_json(dir / "heatmap.config.json", resolved);
  out << "wrote " << maps.size() << " heatmaps to " << dir.string() << "\n";
  return kExitOk;
}

int curves_cmd(const json& j, std::ostream& out) {
  const auto table = diag::read_metrics_csv(get<std::string>(j, "metrics"));
  const auto dir = prepare_out_dir(j);
  const auto curves = diag::capacity_curves(table);
  diag::write_capacity_curves(curves, dir);
  json resolved = j;
  resolved.erase("config");
  write_json(dir / "curves.config.json", resolved);
  out << "wrote " << curves.iteration.size() << " rows x " << curves.names.size() << " series to " << dir.string()
      << "\n";
  return kExitOk;
}

int score_cmd(const json& j, std::ostream& out) {
  auto in = load_inputs(j);
  const auto dir = prepare_out_dir(j);
  const auto a = diag::factor_alignment_score(*in.vae.model, in.data);
  diag::write_alignment_csv(a, dir / "alignment.csv");
  json resolved = j;
  resolved.erase("config");
  write_json(dir / "score.config.json", resolved);
  for (const auto& m : a.matches)
    out << "latent " << m.latent << " -> " << a.factor_names[m.factor] << "  |rho| " << m.abs_rho << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Capacity-annealed VAE toolkit"};
  app.require_subcommand(1);

  Command gen(app, "gen-data", "Render a synthetic dataset", gen_data_defaults());
  gen.add("kind", "blob | dsprites | coloured");
  gen.add("res", "canvas resolution in pixels");
  gen.add("out", "dataset file to write");
  gen.add("seed", "recorded for provenance; rendering is deterministic");
  gen.add("positions", "position grid size (blob, coloured)");
  gen.add("positions_x", "x grid size (dsprites)");
  gen.add("positions_y", "y grid size (dsprites)");
  gen.add("shapes", "number of shapes");
  gen.add("scales", "number of scales");
  gen.add("rotations", "number of rotations");
  gen.add("hues", "number of hues (coloured)");

  Command tr(app, "train", "Train a VAE or factor generator", train_defaults());
  tr.add("seed", "run seed");
  tr.add("out", "output directory");
  tr.add("data", "dataset file");
  tr.add("iterations", "total iterations");
  tr.add("experiment", "vae | generator");
  tr.add("resume", "checkpoint to resume from");

  const std::map<std::string, std::string> diag_help{
      {"ckpt", "checkpoint file"},
      {"data", "dataset file"},
      {"out", "output directory"},
      {"model", "model description (default: model.json next to the checkpoint)"},
      {"seed", "draws the KL sample, header images and default seed image"},
      {"values", "traversal points over [-3, 3]"},
      {"seed_index", "dataset entry to traverse from (default: drawn with --seed)"},
      {"kl_samples", "entries used to rank latents by KL"},
      {"cell", "heatmap pixels per grid cell"},
      {"metrics", "metrics CSV written by train"},
  };
  const auto help_for = [&](const std::string& k, bool uses_seed) {
    return k == "seed" && !uses_seed ? std::string("unused; accepted for uniformity") : diag_help.at(k);
  };

  Command trav(app, "traverse", "Latent traversal grid",
               diag_defaults({{"values", 11ULL}, {"seed_index", -1LL}, {"kl_samples", 1024ULL}}));
  for (const char* k : {"ckpt", "data", "out", "model", "seed", "values", "seed_index", "kl_samples"})
    trav.add(k, help_for(k, true));

  Command heat(app, "heatmap", "Position tuning heatmaps", diag_defaults({{"cell", 4ULL}}));
  for (const char* k : {"ckpt", "data", "out", "model", "seed", "cell"}) heat.add(k, help_for(k, false));

  Command curv(app, "curves", "Capacity allocation curves from a metrics CSV",
               json{{"config", nullptr}, {"seed", 0ULL}, {"out", nullptr}, {"metrics", nullptr}});
  for (const char* k : {"metrics", "out", "seed"}) curv.add(k, help_for(k, false));

  Command score(app, "score", "Latent/factor Spearman alignment", diag_defaults(json::object()));
  for (const char* k : {"ckpt", "data", "out", "model", "seed"}) score.add(k, help_for(k, false));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (gen.selected()) return gen_data(gen.resolve(), out);
    if (tr.selected()) return train_cmd(tr, out);
    if (trav.selected()) return traverse_cmd(trav.resolve(), out);
    if (heat.selected()) return heatmap_cmd(heat.resolve(), out);
    if (curv.selected()) return curves_cmd(curv.resolve(), out);
    if (score.selected()) return score_cmd(score.resolve(), out);
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace capvae::cli
