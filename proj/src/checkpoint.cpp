// SPDX-License-Identifier: Apache-2.0
#include "retro/nn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>

#include "retro/error.hpp"
#include "retro/io.hpp"

namespace retro::nn {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'T', 'R', 'O', 'C', 'K', 'P'};

class Writer {
 public:
  template <class U>
  void put(U value) {
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
    static_assert(sizeof(U) == sizeof(Bits));
    const Bits bits = std::bit_cast<Bits>(value);
    for (std::size_t i = 0; i < sizeof(Bits); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out += s;
  }
  std::string out;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  template <class U>
  U get() {
    using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(Bits));
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(Bits); ++i) {
      bits |= static_cast<Bits>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(Bits);
    return std::bit_cast<U>(bits);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(ErrorKind::ChecksumMismatch, "checkpoint body ends early");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  for (std::size_t off = 0; off < bytes.size(); off += 1u << 30) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

template <class T>
std::string encode_checkpoint(const ParameterSet<T>& params, const ModelConfig& cfg, const Vocabulary& vocab) {
  Writer w;
  w.out.assign(kMagic, sizeof kMagic);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(sizeof(T)));
  for (int v : {cfg.vocab_size, cfg.num_layers, cfg.model_dim, cfg.num_heads, cfg.ffn_dim, cfg.max_seq_len}) {
    w.put(static_cast<std::int32_t>(v));
  }
  w.put(cfg.dropout_rate);
  w.put(cfg.layernorm_epsilon);
  w.put(params.step);
  w.put(static_cast<std::uint32_t>(vocab.size()));
  for (const auto& t : vocab.tokens()) w.put_string(t);
  w.put(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.put_string(params.names[i]);
    w.put(static_cast<std::uint64_t>(params[i].rows()));
    w.put(static_cast<std::uint64_t>(params[i].cols()));
    const T* data = params[i].data();
    for (Eigen::Index j = 0; j < params[i].size(); ++j) w.put(data[j]);
  }
  w.put(checksum(w.out));
  return std::move(w.out);
}

template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4) throw Error(ErrorKind::ChecksumMismatch, "checkpoint too short");
  const std::string_view body(bytes.data(), bytes.size() - 4);
  Reader trailer(std::string_view(bytes).substr(bytes.size() - 4));
  if (trailer.get<std::uint32_t>() != checksum(body)) {
    throw Error(ErrorKind::ChecksumMismatch, "checkpoint checksum does not match its contents");
  }
  if (std::memcmp(body.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorKind::VersionMismatch, "not a checkpoint file");
  }
  Reader r(body.substr(sizeof kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint format version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  const auto precision = r.get<std::uint32_t>();
  if (precision != sizeof(T)) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint stores " + std::to_string(precision) + "-byte scalars, expected " +
                                                std::to_string(sizeof(T)));
  }
  Checkpoint<T> ck;
  ModelConfig& c = ck.config;
  c.vocab_size = r.get<std::int32_t>();
  c.num_layers = r.get<std::int32_t>();
  c.model_dim = r.get<std::int32_t>();
  c.num_heads = r.get<std::int32_t>();
  c.ffn_dim = r.get<std::int32_t>();
  c.max_seq_len = r.get<std::int32_t>();
  c.dropout_rate = r.get<double>();
  c.layernorm_epsilon = r.get<double>();
  c.validate();
  ck.params.step = r.get<std::uint64_t>();
  std::vector<std::string> tokens(r.get<std::uint32_t>());
  for (auto& t : tokens) t = r.get_string();
  ck.vocab = Vocabulary(std::move(tokens));
  const auto count = r.get<std::uint32_t>();
  const Layout layout(c);
  if (count != layout.specs.size() || ck.vocab.size() != c.vocab_size) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint tensors do not match its config");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_string();
    const auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
    const TensorSpec& spec = layout.specs[i];
    if (name != spec.name || rows != static_cast<std::uint64_t>(spec.rows) ||
        cols != static_cast<std::uint64_t>(spec.cols)) {
      throw Error(ErrorKind::VersionMismatch, "unexpected tensor " + name);
    }
    Mat<T> m(spec.rows, spec.cols);
    T* data = m.data();
    for (Eigen::Index j = 0; j < m.size(); ++j) data[j] = r.get<T>();
    ck.params.names.push_back(std::move(name));
    ck.params.tensors.push_back(std::move(m));
  }
  if (!r.done()) throw Error(ErrorKind::VersionMismatch, "trailing bytes after tensors");
  return ck;
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params, const ModelConfig& cfg,
                     const Vocabulary& vocab) {
  io::write_file_atomic(path, encode_checkpoint(params, cfg, vocab));
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(io::read_file(path));
}

void require_compatible(const ModelConfig& have, const Vocabulary& have_vocab, const ModelConfig& want,
                        const Vocabulary& want_vocab) {
  if (!(have == want)) throw Error(ErrorKind::VersionMismatch, "checkpoint model config differs from the run config");
  if (!(have_vocab == want_vocab)) throw Error(ErrorKind::VersionMismatch, "checkpoint vocabulary differs from the run vocabulary");
}

template std::string encode_checkpoint(const ParameterSet<float>&, const ModelConfig&, const Vocabulary&);
template std::string encode_checkpoint(const ParameterSet<double>&, const ModelConfig&, const Vocabulary&);
template Checkpoint<float> decode_checkpoint(const std::string&);
template Checkpoint<double> decode_checkpoint(const std::string&);
template void save_checkpoint(const std::filesystem::path&, const ParameterSet<float>&, const ModelConfig&,
                              const Vocabulary&);
template void save_checkpoint(const std::filesystem::path&, const ParameterSet<double>&, const ModelConfig&,
                              const Vocabulary&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace retro::nn
