#include "patchdenoise/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "patchdenoise/error.hpp"
#include "patchdenoise/serialization.hpp"

namespace patchdenoise {

namespace {

constexpr char kMagic[8] = {'P', 'D', 'C', 'K', 'P', 'T', '0', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) { bytes(s.data(), s.size()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::string path) : data_(data), path_(std::move(path)) {}

  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw IntegrityError("checkpoint " + path_ + ": " + msg + " at byte offset " +
                         std::to_string(at));
  }

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      fail(std::string("truncated while reading ") + what + " (need " + std::to_string(n) +
               " bytes, " + std::to_string(data_.size() - pos_) + " left)",
           pos_);
    }
  }

  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const ModelWeights<float>& weights) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.uint<std::uint32_t>(kCheckpointVersion);
  const std::string config = to_json(weights.config()).dump();
  w.uint<std::uint64_t>(config.size());
  w.str(config);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(weights.params().size()));
  for (std::size_t i = 0; i < weights.params().size(); ++i) {
    const auto& name = weights.names()[i];
    const auto& t = weights.params()[i];
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.str(name);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) w.uint<std::uint64_t>(d);
    for (float v : t.data()) w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  w.uint<std::uint64_t>(fnv1a64(w.buffer()));

  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.buffer().data()),
              static_cast<std::streamsize>(w.buffer().size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place at " + path.string());
  }
}

ModelWeights<float> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes, path.string());

  const std::string magic = r.str(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) r.fail("bad magic", 0);
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(version), r.offset() - 4);
  }
  const auto config_len = r.uint<std::uint64_t>("config length");
  const std::size_t config_at = r.offset();
  const std::string config_text = r.str(config_len, "config");
  ModelConfig config;
  try {
    config = model_config_from_json(nlohmann::json::parse(config_text));
    config.validate();
  } catch (const std::exception& e) {
    r.fail(std::string("unreadable config (") + e.what() + ")", config_at);
  }

  ModelWeights<float> reference = build_model<float>(config);
  ModelWeights<float> out(config);
  const std::size_t count_at = r.offset();
  const auto count = r.uint<std::uint32_t>("tensor count");
  if (count != reference.params().size()) {
    r.fail("tensor count " + std::to_string(count) + " does not match the config's " +
               std::to_string(reference.params().size()),
           count_at);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_at = r.offset();
    const auto name_len = r.uint<std::uint32_t>("tensor name length");
    const std::string name = r.str(name_len, "tensor name");
    if (!reference.contains(name)) r.fail("unexpected tensor '" + name + "'", entry_at);
    if (out.contains(name)) r.fail("duplicate tensor '" + name + "'", entry_at);
    const auto ndim = r.uint<std::uint32_t>("tensor rank");
    if (ndim > 8) r.fail("implausible rank for '" + name + "'", entry_at);
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(r.uint<std::uint64_t>("tensor dims"));
    if (shape != reference.get(name).shape()) {
      r.fail("tensor '" + name + "' has shape " + shape_string(shape) + ", config implies " +
                 shape_string(reference.get(name).shape()),
             entry_at);
    }
    const std::size_t n = shape_numel(shape);
    r.need(n * 4, "tensor data");
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(r.uint<std::uint32_t>("tensor data"));
    out.add(name, Tensor<float>(shape, std::move(values), true));
  }
  const std::size_t trailer_at = r.offset();
  const auto stored = r.uint<std::uint64_t>("checksum");
  if (r.offset() != bytes.size()) r.fail("trailing bytes after checksum", r.offset());
  if (stored != fnv1a64(std::span(bytes).first(trailer_at))) {
    r.fail("checksum mismatch", trailer_at);
  }
  if (out.names() != reference.names()) r.fail("tensor order differs from the config", count_at);
  return out;
}

ModelWeights<float> load_checkpoint(const std::filesystem::path& path,
                                    const ModelConfig& expected) {
  auto weights = load_checkpoint(path);
  if (!(weights.config() == expected)) {
    throw ConfigError("checkpoint " + path.string() + " was saved with config " +
                      to_json(weights.config()).dump() + ", expected " +
                      to_json(expected).dump());
  }
  return weights;
}

}  // namespace patchdenoise
