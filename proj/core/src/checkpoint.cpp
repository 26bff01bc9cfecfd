#include "sfeat/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "sfeat/error.hpp"

namespace sfeat {
namespace {

constexpr std::array<char, 4> kMagic = {'S', 'F', 'T', 'C'};
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxDims = 8;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void finish() {
    out_.flush();
    if (!out_) throw DataError("write to '" + path_.string() + "' failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open checkpoint '" + path.string() + "'");
    in_.seekg(0, std::ios::end);
    remaining_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }
  std::uint64_t remaining() const { return remaining_; }
  void need(std::uint64_t n, const char* what) {
    if (n > remaining_) {
      throw DataError("checkpoint '" + path_.string() + "' truncated: " + what + " needs " +
                      std::to_string(n) + " bytes, " + std::to_string(remaining_) + " left");
    }
  }
  void bytes(void* p, std::size_t n, const char* what) {
    need(n, what);
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw DataError("read from '" + path_.string() + "' failed");
    remaining_ -= n;
  }
  std::uint8_t u8(const char* what) {
    std::uint8_t v;
    bytes(&v, 1, what);
    return v;
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    unsigned char b[8];
    bytes(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  /// Reads count doubles after checking the payload fits in the file.
  std::vector<double> f64_payload(std::uint64_t count, const std::string& what) {
    if (count > remaining_ / 8) {
      throw DataError("checkpoint '" + path_.string() + "' payload length mismatch for " + what +
                      ": expected " + std::to_string(count * 8) + " bytes, " +
                      std::to_string(remaining_) + " left");
    }
    std::vector<double> out(count);
    for (auto& v : out) v = std::bit_cast<double>(u64("payload"));
    return out;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t remaining_ = 0;
};

}  // namespace

OptimizerState OptimizerState::zeros_like(const Network& net) {
  OptimizerState s;
  for (const auto& p : net.parameters()) {
    s.first_moment.emplace_back(p.value.shape, 0.0);
    s.second_moment.emplace_back(p.value.shape, 0.0);
  }
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const OptimizerState* optimizer, std::uint64_t training_step) {
  const BackboneConfig& cfg = net.config();
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg.input_channels));
  w.u32(static_cast<std::uint32_t>(cfg.descriptor_dim));
  w.u8(cfg.use_dsc_tail ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(cfg.channel_widths.size()));
  for (std::size_t width : cfg.channel_widths) w.u32(static_cast<std::uint32_t>(width));
  w.u64(training_step);
  w.u32(static_cast<std::uint32_t>(net.parameters().size()));
  for (const auto& p : net.parameters()) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.value.ndim()));
    for (std::size_t d : p.value.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.data) w.f64(v);
  }
  w.u8(optimizer ? 1 : 0);
  if (optimizer) {
    if (optimizer->first_moment.size() != net.parameters().size() ||
        optimizer->second_moment.size() != net.parameters().size()) {
      throw ShapeError("optimizer state does not match network parameters");
    }
    w.u64(optimizer->step);
    for (const auto& t : optimizer->first_moment) {
      for (double v : t.data) w.f64(v);
    }
    for (const auto& t : optimizer->second_moment) {
      for (double v : t.data) w.f64(v);
    }
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw DataError("'" + path.string() + "' is not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  BackboneConfig cfg;
  cfg.input_channels = r.u32("config");
  cfg.descriptor_dim = r.u32("config");
  cfg.use_dsc_tail = r.u8("config") != 0;
  const std::uint32_t n_widths = r.u32("config");
  r.need(4ull * n_widths, "channel widths");
  cfg.channel_widths.clear();
  for (std::uint32_t i = 0; i < n_widths; ++i) cfg.channel_widths.push_back(r.u32("config"));
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config invalid: ") + e.what());
  }
  const auto layout = parameter_layout(cfg);
  const std::uint64_t training_step = r.u64("training step");
  const std::uint32_t n_params = r.u32("parameter count");
  if (n_params != layout.size()) {
    throw DataError("checkpoint has " + std::to_string(n_params) + " parameters, config implies " +
                    std::to_string(layout.size()));
  }
  std::vector<NamedParameter> params;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    if (name_len > kMaxNameLength) throw DataError("checkpoint parameter name too long");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "parameter name");
    const std::uint32_t ndim = r.u32("ndim");
    if (ndim > kMaxDims) throw DataError("checkpoint parameter '" + name + "' has too many dims");
    ad::Shape shape(ndim);
    for (auto& d : shape) d = r.u32("dims");
    if (name != layout[i].first || shape != layout[i].second) {
      throw DataError("checkpoint parameter '" + name + "' " + ad::shape_string(shape) +
                      " does not match expected '" + layout[i].first + "' " +
                      ad::shape_string(layout[i].second));
    }
    params.push_back(NamedParameter{name, ad::Tensor(shape, r.f64_payload(ad::numel(shape), name))});
  }
  Checkpoint ck{Network::from_parameters(cfg, std::move(params)), std::nullopt, training_step};
  if (r.u8("optimizer flag") != 0) {
    OptimizerState opt;
    opt.step = r.u64("optimizer step");
    for (const auto& [name, shape] : layout) {
      opt.first_moment.emplace_back(shape, r.f64_payload(ad::numel(shape), name + " moment"));
    }
    for (const auto& [name, shape] : layout) {
      opt.second_moment.emplace_back(shape, r.f64_payload(ad::numel(shape), name + " moment"));
    }
    ck.optimizer = std::move(opt);
  }
  if (r.remaining() != 0) {
    throw DataError("checkpoint '" + path.string() + "' has " + std::to_string(r.remaining()) +
                    " trailing bytes");
  }
  return ck;
}

}  // namespace sfeat
