#include "pstory/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "pstory/error.hpp"

namespace pstory {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add_params(const ParamStore& params, std::string_view prefix) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    add(std::string(prefix) + params.name(i), params.at(i));
  }
}

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor& Checkpoint::get(std::string_view name) const {
  const Tensor* t = find(name);
  if (!t) throw FormatError("checkpoint has no entry named " + std::string(name));
  return *t;
}

void Checkpoint::load_params(ParamStore& params, std::string_view prefix) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = std::string(prefix) + params.name(i);
    const Tensor& t = get(key);
    if (t.shape() != params.at(i).shape()) {
      throw FormatError("checkpoint entry " + key + " has shape " + shape_str(t.shape()) +
                        ", expected " + shape_str(params.at(i).shape()));
    }
    params.at(i) = t;
  }
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, ckpt.metadata.size());
  out += ckpt.metadata;
  put<std::uint64_t>(out, ckpt.entries.size());
  for (const auto& [name, t] : ckpt.entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    const auto* raw = reinterpret_cast<const char*>(t.data());
    out.append(raw, t.size() * sizeof(double));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic) {
    throw FormatError("not a checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto meta_len = r.get<std::uint64_t>("metadata length");
  ckpt.metadata = std::string(r.take(meta_len, "metadata"));
  const auto count = r.get<std::uint64_t>("entry count");
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name(r.take(name_len, "name"));
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw FormatError("entry " + name + " has invalid rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.get<std::uint64_t>("shape");
      if (d == 0 || d > r.remaining()) throw FormatError("entry " + name + " has invalid shape");
      n *= d;
    }
    if (n > r.remaining() / sizeof(double)) {
      throw FormatError("checkpoint truncated while reading values of " + name);
    }
    std::vector<double> values(n);
    auto raw = r.take(n * sizeof(double), "values");
    std::memcpy(values.data(), raw.data(), raw.size());
    ckpt.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint entries");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pstory
