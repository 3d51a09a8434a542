// SPDX-License-Identifier: Apache-2.0
#include "cliff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cliff/errors.hpp"
#include "cliff/rng.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace cliff {
namespace {

using Kind = CheckpointError::Kind;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : bytes_(b) {}
  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  const unsigned char* take(std::size_t n) {
    if (n > bytes_.size() - pos_)
      throw CheckpointError(Kind::Truncated, "checkpoint truncated at byte " + std::to_string(pos_));
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'C', 'L', 'I', 'F'};

}  // namespace

const StoredTensor& CheckpointData::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw CheckpointError(Kind::Malformed, "checkpoint has no tensor '" + name + "'");
}

void CheckpointData::restore(const std::string& name, Tensor& target) const {
  const auto& t = find(name);
  if (t.shape != target.shape())
    throw CheckpointError(Kind::Malformed, "tensor '" + name + "' stored as " + shape_str(t.shape) +
                                               ", expected " + shape_str(target.shape()));
  std::copy(t.data.begin(), t.data.end(), target.mutable_data().begin());
}

std::vector<unsigned char> encode_checkpoint(const CheckpointData& data) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(data.metadata.size());
  w.put_bytes(data.metadata.data(), data.metadata.size());
  w.put<std::uint64_t>(data.tensors.size());
  for (const auto& t : data.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put<std::uint64_t>(d);
    w.put_bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  w.put<std::uint64_t>(fnv1a64(w.bytes));
  return std::move(w.bytes);
}

CheckpointData decode_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError(Kind::BadMagic, "not a checkpoint (missing CLIF magic)");
  if (bytes.size() < 4 + 4 + 8)
    throw CheckpointError(Kind::Truncated, "checkpoint truncated in header");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::VersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                     ", this build reads " +
                                                     std::to_string(kCheckpointVersion));
  // Verify integrity before trusting any length field.
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a64(body) != stored) {
    // A short file usually also fails the checksum; report it as truncation
    // when the declared structure runs past the end.
    try {
      Reader probe(bytes);
      probe.take(8);
      const auto meta_len = probe.get<std::uint64_t>();
      probe.take(meta_len);
      const auto count = probe.get<std::uint64_t>();
      for (std::uint64_t i = 0; i < count; ++i) {
        probe.take(probe.get<std::uint32_t>());
        const auto rank = probe.get<std::uint32_t>();
        std::uint64_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) n *= probe.get<std::uint64_t>();
        probe.take(n * sizeof(float));
      }
      probe.take(8);
    } catch (const CheckpointError& e) {
      if (e.kind() == Kind::Truncated) throw;
    }
    throw CheckpointError(Kind::ChecksumMismatch, "checkpoint checksum mismatch");
  }

  Reader r(body);
  r.take(8);
  CheckpointData out;
  const auto meta_len = r.get<std::uint64_t>();
  const auto* meta = r.take(meta_len);
  out.metadata.assign(reinterpret_cast<const char*>(meta), meta_len);
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    const auto name_len = r.get<std::uint32_t>();
    const auto* name = r.take(name_len);
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint64_t>());
    t.data.resize(numel_of(t.shape));
    std::memcpy(t.data.data(), r.take(t.data.size() * sizeof(float)), t.data.size() * sizeof(float));
    out.tensors.push_back(std::move(t));
  }
  if (r.position() != body.size())
    throw CheckpointError(Kind::Malformed, "trailing bytes after tensor records");
  return out;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(Kind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  write_file_atomic(path, encode_checkpoint(data));
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace cliff
