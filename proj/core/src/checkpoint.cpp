#include "capvae/checkpoint.hpp"

#include "binary_io.hpp"
#include "capvae/error.hpp"

namespace capvae::nn {

namespace {

void write_tensor(detail::ByteWriter& w, const std::string& name, const Tensor& t) {
  w.short_string(name, "tensor name");
  if (t.rank() > 255) throw InvalidArgument("tensor rank exceeds 255: " + name);
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (auto v : t.values()) w.f32(v);
}

NamedTensor read_tensor(detail::ByteReader& r) {
  NamedTensor nt;
  nt.name = r.short_string("tensor name");
  const auto rank = r.u8("tensor rank of " + nt.name);
  if (rank == 0) throw FormatError("tensor rank must be >= 1 for " + nt.name);
  Shape shape(rank);
  for (auto& d : shape) {
    d = r.u32("tensor dims of " + nt.name);
    if (d == 0) throw FormatError("zero tensor dimension for " + nt.name);
  }
  const std::size_t n = element_count(shape);
  if (n * 4 > r.remaining()) throw FormatError("truncated file while reading payload of " + nt.name);
  std::vector<float> values(n);
  r.f32_array(values.data(), n, "payload of " + nt.name);
  nt.value = Tensor(std::move(shape), std::move(values));
  return nt;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, std::span<Parameter<float>* const> params,
                      const AdamState<float>* adam,
                      const std::map<std::string, std::uint64_t>& extras) {
  detail::ByteWriter w;
  w.raw("CAPK");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) write_tensor(w, p->name, p->value);

  w.u8(adam != nullptr ? 1 : 0);
  if (adam != nullptr) {
    if (adam->first_moment.size() != params.size() || adam->second_moment.size() != params.size())
      throw StateError("write_checkpoint: optimizer state does not match parameter count");
    w.u64(adam->step);
    w.f64(adam->hyper.learning_rate);
    w.f64(adam->hyper.beta1);
    w.f64(adam->hyper.beta2);
    w.f64(adam->hyper.epsilon);
    w.u32(static_cast<std::uint32_t>(2 * params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) write_tensor(w, "m/" + params[i]->name, adam->first_moment[i]);
    for (std::size_t i = 0; i < params.size(); ++i) write_tensor(w, "v/" + params[i]->name, adam->second_moment[i]);
  }

  w.u32(static_cast<std::uint32_t>(extras.size()));
  for (const auto& [key, value] : extras) {
    w.short_string(key, "extra name");
    w.u64(value);
  }
  w.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  if (r.raw(4, "magic") != "CAPK") throw FormatError("bad magic: not a CAPK checkpoint: " + path.string());
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  const auto count = r.u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) ckpt.parameters.push_back(read_tensor(r));
  if (r.at_end()) return ckpt;

  if (r.u8("adam present flag") == 1) {
    AdamState<float> adam;
    adam.step = r.u64("adam step");
    adam.hyper.learning_rate = r.f64("adam learning rate");
    adam.hyper.beta1 = r.f64("adam beta1");
    adam.hyper.beta2 = r.f64("adam beta2");
    adam.hyper.epsilon = r.f64("adam epsilon");
    const auto moments = r.u32("adam moment count");
    if (moments != 2 * count) throw FormatError("adam moment count does not match parameter count");
    for (std::uint32_t i = 0; i < moments; ++i) {
      auto nt = read_tensor(r);
      const auto& param = ckpt.parameters[i % count];
      const std::string expected = (i < count ? "m/" : "v/") + param.name;
      if (nt.name != expected) throw FormatError("adam moment name: expected " + expected + ", got " + nt.name);
      if (nt.value.shape() != param.value.shape()) throw FormatError("adam moment shape mismatch for " + expected);
      (i < count ? adam.first_moment : adam.second_moment).push_back(std::move(nt.value));
    }
    ckpt.adam = std::move(adam);
  }
  if (r.at_end()) return ckpt;

  const auto extras = r.u32("extras count");
  for (std::uint32_t i = 0; i < extras; ++i) {
    auto key = r.short_string("extra name");
    ckpt.extras[key] = r.u64("extra value of " + key);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint extras");
  return ckpt;
}

void load_parameters(const Checkpoint& ckpt, std::span<Parameter<float>* const> params) {
  for (auto* p : params) {
    const NamedTensor* found = nullptr;
    for (const auto& nt : ckpt.parameters)
      if (nt.name == p->name) found = &nt;
    if (found == nullptr) throw FormatError("checkpoint has no parameter named " + p->name);
    if (found->value.shape() != p->value.shape())
      throw ShapeError("checkpoint parameter " + p->name + " has shape " + shape_string(found->value.shape()) +
                       ", model expects " + shape_string(p->value.shape()));
    p->value = found->value;
    p->zero_grad();
  }
}

}  // namespace capvae::nn
