#include "runs.hpp"

#include <chrono>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

namespace capvae::acceptance {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return json();
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    return json();
  }
}

// Highest-numbered ckpt_<n>.capk in `dir`, if any.
fs::path latest_checkpoint(const fs::path& dir) {
  static const std::regex pattern(R"(ckpt_(\d+)\.capk)");
  fs::path best;
  unsigned long long best_n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (std::regex_match(name, m, pattern) && std::stoull(m[1]) > best_n) best_n = std::stoull(m[1]), best = e.path();
  }
  return best;
}

}  // namespace

std::shared_ptr<const synth::Dataset> ensure_dataset(const fs::path& file, const synth::FactorSpec& spec,
                                                     synth::Renderer renderer, std::size_t resolution) {
  if (fs::exists(file)) {
    auto d = std::make_shared<const synth::Dataset>(synth::read_dataset(file));
    if (d->spec() == spec && d->renderer() == renderer && d->height() == resolution) return d;
  }
  fs::create_directories(file.parent_path());
  auto d = std::make_shared<const synth::Dataset>(synth::enumerate_dataset(spec, renderer, resolution));
  synth::write_dataset(*d, file);
  return d;
}

fs::path ensure_run(const fs::path& artifacts, RunSpec spec, std::shared_ptr<const synth::Dataset> data,
                    std::ostream& log) {
  const fs::path dir = artifacts / spec.name;
  spec.config.out_dir = dir;
  spec.config.record_wall_clock = false;
  const json wanted = spec.config;

  if (read_json(dir / "done.json") == wanted) {
    log << "  [cached] " << spec.name << "\n";
    return dir;
  }

  fs::path resume;
  if (fs::exists(dir) && read_json(dir / "config.json") == wanted) resume = latest_checkpoint(dir);
  if (resume.empty()) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  train::Trainer trainer(spec.config, std::move(data));
  if (!resume.empty()) {
    trainer.load_checkpoint(resume);
    log << "  [resume] " << spec.name << " from iteration " << trainer.iteration() << "\n";
  } else {
    log << "  [train] " << spec.name << " (" << spec.config.iterations << " iterations)\n";
  }
  log.flush();

  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t report = std::max<std::uint64_t>(spec.config.iterations / 4, 1);
  trainer.run([&](const train::MetricsRecord& m) {
    if ((m.iteration + 1) % report == 0) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log << "    " << spec.name << " step " << m.iteration + 1 << "  C " << m.capacity << "  kl " << m.kl_total
          << "  loglik " << m.loglik << "  (" << static_cast<int>(s) << "s)\n";
      log.flush();
    }
  });

  std::ofstream(dir / "done.json") << wanted.dump(1);
  return dir;
}

}  // namespace capvae::acceptance
