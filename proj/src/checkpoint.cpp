#include "corefd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "corefd/errors.hpp"

namespace corefd::trainer {

using ndgrad::Tensor;

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  return a.version == b.version && a.model == b.model && a.epoch == b.epoch &&
         std::memcmp(&a.best_val_auc, &b.best_val_auc, sizeof(double)) == 0 && a.seed == b.seed &&
         a.optimizer.step == b.optimizer.step && a.optimizer.m == b.optimizer.m && a.optimizer.v == b.optimizer.v &&
         a.optimizer.config.lr == b.optimizer.config.lr && a.optimizer.config.beta1 == b.optimizer.config.beta1 &&
         a.optimizer.config.beta2 == b.optimizer.config.beta2 &&
         a.optimizer.config.epsilon == b.optimizer.config.epsilon;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001B3ULL;
  }
  return h;
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  void tensor(const std::string& name, const Tensor& t) {
    if (name.size() > 0xFFFF) throw Error("checkpoint: tensor name too long");
    if (t.rank() > 0xFF) throw Error("checkpoint: tensor rank too large");
    le(static_cast<std::uint16_t>(name.size()));
    bytes(name.data(), name.size());
    le(static_cast<std::uint8_t>(t.rank()));
    for (const std::size_t d : t.dims()) le(static_cast<std::uint32_t>(d));
    for (const double v : t.data()) f64(v);
    ++count_;
  }

  std::vector<std::uint8_t>& buffer() { return out_; }
  std::uint32_t count() const { return count_; }

 private:
  std::vector<std::uint8_t> out_;
  std::uint32_t count_ = 0;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > limit_) {
      throw FormatError("truncated checkpoint: needed " + std::to_string(n) + " bytes for " + what + " at offset " +
                        std::to_string(pos_) + ", payload ends at " + std::to_string(limit_));
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

Tensor u64_tensor(std::uint64_t v) {
  return Tensor({2}, {static_cast<double>(v & 0xFFFFFFFFULL), static_cast<double>(v >> 32)});
}

std::uint64_t u64_from(const Tensor& t) {
  return static_cast<std::uint64_t>(t[0]) | (static_cast<std::uint64_t>(t[1]) << 32);
}

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer body;
  const model::ModelConfig& cfg = ckpt.model.config;
  std::vector<double> config{static_cast<double>(cfg.input_size)};
  for (const std::size_t c : cfg.channels) config.push_back(static_cast<double>(c));
  body.tensor("meta.config", Tensor({config.size()}, config));
  body.tensor("meta.epoch", Tensor::scalar(static_cast<double>(ckpt.epoch)));
  body.tensor("meta.best_val_auc", Tensor::scalar(ckpt.best_val_auc));
  body.tensor("meta.seed", u64_tensor(ckpt.seed));
  const ndgrad::AdamConfig& ac = ckpt.optimizer.config;
  body.tensor("adam.hparams", Tensor({4}, {ac.lr, ac.beta1, ac.beta2, ac.epsilon}));
  body.tensor("adam.step", u64_tensor(ckpt.optimizer.step));

  const auto params = ckpt.model.named_parameters();
  const bool has_moments = !ckpt.optimizer.m.empty();
  if (has_moments && (ckpt.optimizer.m.size() != params.size() || ckpt.optimizer.v.size() != params.size())) {
    throw ShapeError("checkpoint: optimizer state does not match model parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    body.tensor(params[i].first, *params[i].second);
    if (has_moments) {
      body.tensor("adam.m." + params[i].first, ckpt.optimizer.m[i]);
      body.tensor("adam.v." + params[i].first, ckpt.optimizer.v[i]);
    }
  }

  Writer out;
  out.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  out.le(ckpt.version);
  out.le(body.count());
  out.bytes(body.buffer().data(), body.buffer().size());
  out.le(fnv1a64(out.buffer()));
  return std::move(out.buffer());
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kCheckpointMagic || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("not a checkpoint file: bad magic (expected CORECKPT)");
  }
  if (bytes.size() < sizeof kCheckpointMagic + 8 + 8) {
    throw FormatError("truncated checkpoint: file ends at offset " + std::to_string(bytes.size()) +
                      " before the header and checksum are complete");
  }
  Reader rd(bytes, bytes.size() - 8);
  rd.str(sizeof kCheckpointMagic, "magic");
  const auto version = rd.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = rd.le<std::uint32_t>("tensor count");
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = rd.le<std::uint16_t>("tensor name length");
    std::string name = rd.str(name_len, "tensor name");
    const auto rank = rd.le<std::uint8_t>("tensor rank");
    ndgrad::Dims dims(rank);
    for (auto& d : dims) d = rd.le<std::uint32_t>("tensor dims");
    const std::size_t n = ndgrad::element_count(dims);
    rd.need(n * 8, "tensor payload");
    std::vector<double> data(n);
    for (double& v : data) v = rd.f64("tensor payload");
    tensors.insert_or_assign(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  if (rd.pos() != bytes.size() - 8) {
    throw FormatError("checkpoint has " + std::to_string(bytes.size() - 8 - rd.pos()) +
                      " unexpected bytes at offset " + std::to_string(rd.pos()));
  }
  Reader tail(bytes, bytes.size());
  for (std::size_t i = 0; i < bytes.size() - 8; ++i) tail.le<std::uint8_t>("checksum prefix");
  const auto stored = tail.le<std::uint64_t>("checksum");
  if (stored != fnv1a64(bytes.first(bytes.size() - 8))) throw FormatError("checkpoint checksum mismatch");

  const auto take = [&](const std::string& name) -> Tensor& {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    return it->second;
  };

  Checkpoint ckpt;
  ckpt.version = version;
  const Tensor& config = take("meta.config");
  if (config.rank() != 1 || config.size() < 2) throw FormatError("checkpoint: malformed meta.config");
  model::ModelConfig cfg;
  cfg.input_size = static_cast<std::size_t>(config[0]);
  cfg.channels.clear();
  for (std::size_t i = 1; i < config.size(); ++i) cfg.channels.push_back(static_cast<std::size_t>(config[i]));
  try {
    ckpt.model = model::make_model(cfg);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  ckpt.epoch = static_cast<std::int64_t>(take("meta.epoch").item());
  ckpt.best_val_auc = take("meta.best_val_auc").item();
  ckpt.seed = u64_from(take("meta.seed"));
  const Tensor& hp = take("adam.hparams");
  if (hp.size() != 4) throw FormatError("checkpoint: malformed adam.hparams");
  ckpt.optimizer.config = {hp[0], hp[1], hp[2], hp[3]};
  ckpt.optimizer.step = u64_from(take("adam.step"));

  const bool has_moments = tensors.contains("adam.m.classifier.weight");
  for (auto& [name, param] : ckpt.model.named_parameters()) {
    Tensor& stored_t = take(name);
    if (stored_t.dims() != param->dims()) {
      throw FormatError("checkpoint tensor '" + name + "' has dims " + ndgrad::dims_to_string(stored_t.dims()) +
                        ", model expects " + ndgrad::dims_to_string(param->dims()));
    }
    *param = std::move(stored_t);
    if (has_moments) {
      ckpt.optimizer.m.push_back(std::move(take("adam.m." + name)));
      ckpt.optimizer.v.push_back(std::move(take("adam.v." + name)));
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace corefd::trainer
