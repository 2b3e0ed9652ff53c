#include "u2nerf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace u2nerf {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[8] = {'U', '2', 'N', 'F', 'C', 'K', 'P', 'T'};

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return 0;
    case torch::kFloat64:
      return 1;
    case torch::kInt64:
      return 2;
    case torch::kUInt8:
      return 3;
    default:
      fail("checkpoint: unsupported dtype ", t);
  }
}

torch::ScalarType dtype_from_code(uint8_t code) {
  switch (code) {
    case 0:
      return torch::kFloat32;
    case 1:
      return torch::kFloat64;
    case 2:
      return torch::kInt64;
    case 3:
      return torch::kUInt8;
    default:
      fail("checkpoint: unknown dtype code ", static_cast<int>(code));
  }
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }

  const char* take(size_t n) {
    require(n <= end_ - pos_, "checkpoint truncated at byte ", pos_);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  size_t position() const { return pos_; }

 private:
  const std::string& bytes_;
  size_t end_;
  size_t pos_ = 0;
};

uint32_t crc(const char* data, size_t n) {
  uLong value = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<size_t>(n, 1u << 30));
    value = crc32(value, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<uint32_t>(value);
}

}  // namespace

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

const torch::Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a.value;
  }
  fail("checkpoint has no array named '", name, "'");
}

void Checkpoint::set(const std::string& name, const torch::Tensor& value) {
  for (auto& a : arrays) {
    if (a.name == name) {
      a.value = value;
      return;
    }
  }
  arrays.push_back({name, value});
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic, sizeof(kMagic));
  put<uint32_t>(out, Checkpoint::kFormatVersion);
  put<uint64_t>(out, checkpoint.config_text.size());
  out += checkpoint.config_text;
  put<uint64_t>(out, checkpoint.arrays.size());
  for (const auto& [name, value] : checkpoint.arrays) {
    const auto t = value.detach().to(torch::kCPU).contiguous();
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out += name;
    put<uint8_t>(out, dtype_code(t.scalar_type()));
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (int64_t d : t.sizes()) put<int64_t>(out, d);
    const size_t nbytes = t.numel() * t.element_size();
    put<uint64_t>(out, nbytes);
    out.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  put<uint32_t>(out, crc(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  require(bytes.size() >= sizeof(kMagic) + 8, "checkpoint too short (", bytes.size(), " bytes)");
  require(std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0, "not a checkpoint file (bad magic)");
  const size_t body = bytes.size() - sizeof(uint32_t);
  uint32_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof(stored));
  require(crc(bytes.data(), body) == stored, "checkpoint checksum mismatch (file corrupt or truncated)");

  Reader in(bytes, body);
  in.take(sizeof(kMagic));
  const auto version = in.get<uint32_t>();
  require(version == Checkpoint::kFormatVersion, "checkpoint format version ", version,
          " is not supported (expected ", Checkpoint::kFormatVersion, ")");
  Checkpoint ckpt;
  const auto config_len = in.get<uint64_t>();
  ckpt.config_text.assign(in.take(config_len), config_len);
  const auto count = in.get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = in.get<uint32_t>();
    std::string name(in.take(name_len), name_len);
    const auto dtype = dtype_from_code(in.get<uint8_t>());
    const auto rank = in.get<uint32_t>();
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = in.get<int64_t>();
    const auto nbytes = in.get<uint64_t>();
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    require(nbytes == static_cast<uint64_t>(t.numel() * t.element_size()), "array ", name,
            " has inconsistent byte length");
    std::memcpy(t.data_ptr(), in.take(nbytes), nbytes);
    ckpt.arrays.push_back({std::move(name), std::move(t)});
  }
  require(in.position() == body, "checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write checkpoint ", path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), "failed writing checkpoint ", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open checkpoint ", path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace u2nerf
