#include "comet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "comet/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "checkpoint layout assumes IEEE-754 binary64");

namespace comet::io {

namespace {

constexpr char kMagic[8] = {'C', 'M', 'E', 'T', 'B', 'I', 'N', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

void put_i64(std::string& out, std::int64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void expect_magic() {
    if (bytes_.size() < 8 || std::memcmp(bytes_.data(), kMagic, 8) != 0) {
      throw Error(Error::Code::Parse, "[archive] bad magic, not an archive file");
    }
    pos_ = 8;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }

  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

  std::string str() {
    const std::uint64_t len = u64();
    need(len);
    std::string s(bytes_.data() + pos_, len);
    pos_ += len;
    return s;
  }

  void doubles(double* dst, std::size_t count) {
    need(count * 8);
    std::memcpy(dst, bytes_.data() + pos_, count * 8);
    pos_ += count * 8;
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw Error(Error::Code::Parse, "[archive] trailing bytes after last entry");
    }
  }

 private:
  void need(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw Error(Error::Code::Parse, "[archive] truncated file");
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(Error::Code::Io, "[io] cannot open " + tmp.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      throw Error(Error::Code::Io, "[io] short write to " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw Error(Error::Code::Io,
                "[io] rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Error::Code::Io, "[io] cannot open " + path.string());
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

std::string Archive::serialize() const {
  std::string out(kMagic, 8);
  put_u64(out, ints.size());
  for (const auto& [name, value] : ints) {
    put_u64(out, name.size());
    out.append(name);
    put_i64(out, value);
  }
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out.append(name);
    put_u64(out, t.shape.size());
    for (std::size_t dim : t.shape) put_u64(out, dim);
    const char* raw = reinterpret_cast<const char*>(t.data.data());
    out.append(raw, t.data.size() * 8);
  }
  return out;
}

Archive Archive::deserialize(const std::string& bytes) {
  Reader r(bytes);
  r.expect_magic();
  Archive a;
  const std::uint64_t int_count = r.u64();
  for (std::uint64_t i = 0; i < int_count; ++i) {
    std::string name = r.str();
    a.ints[name] = r.i64();
  }
  const std::uint64_t tensor_count = r.u64();
  for (std::uint64_t i = 0; i < tensor_count; ++i) {
    std::string name = r.str();
    const std::uint64_t rank = r.u64();
    if (rank > 8) {
      throw Error(Error::Code::Parse, "[archive] implausible tensor rank");
    }
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape[d] = r.u64();
      numel *= shape[d];
    }
    num::Tensor t = num::Tensor::zeros(shape);
    r.doubles(t.data.data(), numel);
    a.tensors.emplace(std::move(name), std::move(t));
  }
  r.expect_end();
  return a;
}

void Archive::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

Archive Archive::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

namespace {

constexpr std::int64_t kFormatVersion = 1;

std::int64_t require_int(const Archive& a, const std::string& name) {
  const auto it = a.ints.find(name);
  if (it == a.ints.end()) {
    throw Error(Error::Code::Parse, "[checkpoint] missing field " + name);
  }
  return it->second;
}

const num::Tensor& require_tensor(const Archive& a, const std::string& name) {
  const auto it = a.tensors.find(name);
  if (it == a.tensors.end()) {
    throw Error(Error::Code::Parse, "[checkpoint] missing tensor " + name);
  }
  return it->second;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  Archive a;
  a.ints["format"] = kFormatVersion;
  a.ints["config.input_dim"] = static_cast<std::int64_t>(model.config.input_dim);
  a.ints["config.feature_dim"] = static_cast<std::int64_t>(model.config.feature_dim);
  a.ints["config.num_known_classes"] =
      static_cast<std::int64_t>(model.config.num_known_classes);
  a.ints["config.projection_dim"] = static_cast<std::int64_t>(model.config.projection_dim);
  a.ints["config.proj_hidden"] = static_cast<std::int64_t>(model.config.proj_hidden);
  a.ints["config.g_hidden_layers"] = static_cast<std::int64_t>(model.config.g_hidden.size());
  for (std::size_t i = 0; i < model.config.g_hidden.size(); ++i) {
    a.ints["config.g_hidden." + std::to_string(i)] =
        static_cast<std::int64_t>(model.config.g_hidden[i]);
  }
  for (const auto& [name, t] : model.params) {
    a.tensors["param." + name] = t;
  }
  a.ints["bank.mode"] = bank.mode() == proto::BankMode::FrozenSource ? 0 : 1;
  a.tensors["bank.sums"] = bank.sums();
  num::Tensor counts = num::Tensor::zeros({bank.classes()});
  for (std::size_t c = 0; c < bank.classes(); ++c) {
    counts.data[c] = static_cast<double>(bank.counts()[c]);
  }
  a.tensors["bank.counts"] = counts;
  a.save(path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  const Archive a = Archive::load(path);
  if (require_int(a, "format") != kFormatVersion) {
    throw Error(Error::Code::Parse, "[checkpoint] unsupported format version");
  }
  model::NetworkConfig config;
  config.input_dim = static_cast<std::size_t>(require_int(a, "config.input_dim"));
  config.feature_dim = static_cast<std::size_t>(require_int(a, "config.feature_dim"));
  config.num_known_classes =
      static_cast<std::size_t>(require_int(a, "config.num_known_classes"));
  config.projection_dim = static_cast<std::size_t>(require_int(a, "config.projection_dim"));
  config.proj_hidden = static_cast<std::size_t>(require_int(a, "config.proj_hidden"));
  const std::int64_t layers = require_int(a, "config.g_hidden_layers");
  config.g_hidden.clear();
  for (std::int64_t i = 0; i < layers; ++i) {
    config.g_hidden.push_back(
        static_cast<std::size_t>(require_int(a, "config.g_hidden." + std::to_string(i))));
  }
  config.validate();

  model::ComposedModel m;
  m.config = config;
  for (const auto& [name, t] : a.tensors) {
    if (name.rfind("param.", 0) == 0) {
      m.params[name.substr(6)] = t;
    }
  }

  const num::Tensor& sums = require_tensor(a, "bank.sums");
  const num::Tensor& counts_t = require_tensor(a, "bank.counts");
  if (counts_t.rank() != 1 || counts_t.shape[0] != sums.rows()) {
    throw Error(Error::Code::Parse, "[checkpoint] bank counts do not match sums");
  }
  std::vector<std::uint64_t> counts(counts_t.shape[0]);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    counts[c] = static_cast<std::uint64_t>(counts_t.data[c]);
  }
  const proto::BankMode mode = require_int(a, "bank.mode") == 0
                                   ? proto::BankMode::FrozenSource
                                   : proto::BankMode::RunningTarget;
  return Checkpoint{std::move(m),
                    proto::PrototypeBank::restore(mode, sums, std::move(counts))};
}

}  // namespace comet::io
