#pragma once

#include <bit>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/han.hpp"
#include "handdi/io.hpp"
#include "handdi/tensor.hpp"

namespace handdi {

// Layout (all integers little-endian):
//   magic     8 bytes  "HANDDIck"
//   version   u32      1
//   precision u8       4 or 8 (bytes per scalar)
//   config    u32 length + UTF-8 key=value text (ModelConfig::echo)
//   count     u32      number of tensors
//   per tensor: u32 name length + name, u32 rank, u64 extent * rank,
//               payload of IEEE-754 scalars, little-endian
inline constexpr std::string_view kCheckpointMagic = "HANDDIck";
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <std::floating_point T>
struct Checkpoint {
  ModelConfig config;
  ModelParams<T> params;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  template <std::unsigned_integral U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(std::string_view s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  template <std::floating_point T>
  void scalar(T v) {
    if constexpr (sizeof(T) == 4) uint(std::bit_cast<std::uint32_t>(v));
    else uint(std::bit_cast<std::uint64_t>(v));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::string_view bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <std::unsigned_integral U>
  U uint() {
    auto s = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    return std::string(bytes(n));
  }
  template <std::floating_point T>
  T scalar() {
    if constexpr (sizeof(T) == 4) return std::bit_cast<T>(uint<std::uint32_t>());
    else return std::bit_cast<T>(uint<std::uint64_t>());
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <std::floating_point T>
std::string encode_checkpoint(const ModelConfig& config, const ModelParams<T>& params) {
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.uint(kCheckpointVersion);
  w.uint(static_cast<std::uint8_t>(sizeof(T)));
  w.str(config.echo());
  w.uint(static_cast<std::uint32_t>(params.tensors.size()));
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    const auto& tensor = params.tensors[t];
    w.str(params.names[t]);
    w.uint(static_cast<std::uint32_t>(tensor.rank()));
    for (auto e : tensor.shape()) w.uint(static_cast<std::uint64_t>(e));
    for (T v : tensor.data()) w.scalar(v);
  }
  return w.take();
}

/// Precision stored in a checkpoint blob (4 or 8).
inline std::uint8_t checkpoint_precision(std::string_view blob) {
  detail::ByteReader r(blob);
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  return r.uint<std::uint8_t>();
}

template <std::floating_point T>
Checkpoint<T> decode_checkpoint(std::string_view blob) {
  const auto precision = checkpoint_precision(blob);
  if (precision != sizeof(T)) {
    throw FormatError("checkpoint holds " + std::to_string(8 * precision) + "-bit scalars, requested " +
                      std::to_string(8 * sizeof(T)));
  }
  detail::ByteReader r(blob);
  r.bytes(kCheckpointMagic.size() + sizeof(std::uint32_t) + 1);
  Checkpoint<T> ck;
  ck.config = parse_model_config(r.str());
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    ck.params.names.push_back(r.str());
    const auto rank = r.uint<std::uint32_t>();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint tensor '" + ck.params.names.back() + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.uint<std::uint64_t>());
    std::vector<T> data(shape_volume(shape));
    for (auto& v : data) v = r.scalar<T>();
    ck.params.tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint tensors");
  ck.params.heads = ck.config.heads;
  ck.params.metapaths = ck.config.metapaths.size();
  if (ck.params.tensors.size() != ck.config.heads * (1 + ck.config.metapaths.size()) + 3) {
    throw FormatError("checkpoint tensor count does not match its model config");
  }
  return ck;
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams<T>& params) {
  io::write_file_atomic(path, encode_checkpoint(config, params));
}

template <std::floating_point T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(io::read_file(path));
}

}  // namespace handdi
