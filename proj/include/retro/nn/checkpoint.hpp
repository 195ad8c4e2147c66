// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout (all integers and reals little-endian):
//
//   "RETROCKP"                      8-byte magic
//   u32 version                     currently 1
//   u32 precision                   bytes per scalar, 4 or 8
//   config                          i32 vocab_size, num_layers, model_dim,
//                                   num_heads, ffn_dim, max_seq_len;
//                                   f64 dropout_rate, layernorm_epsilon
//   u64 step
//   u32 token count, then per token u32 length + bytes
//   u32 tensor count, then per tensor u32 name length + name,
//                                   u64 rows, u64 cols, rows*cols scalars
//   u32 CRC-32 of every preceding byte
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "retro/nn/params.hpp"
#include "retro/nn/vocab.hpp"

namespace retro::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
struct Checkpoint {
  ParameterSet<T> params;
  ModelConfig config;
  Vocabulary vocab;
};

template <class T>
std::string encode_checkpoint(const ParameterSet<T>& params, const ModelConfig& cfg, const Vocabulary& vocab);

/// Throws ChecksumMismatch on truncation or corruption, VersionMismatch on
/// a foreign magic, version or scalar precision.
template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes);

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params, const ModelConfig& cfg,
                     const Vocabulary& vocab);

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// A checkpoint can seed a run only when config and vocabulary match
/// exactly; otherwise VersionMismatch.
void require_compatible(const ModelConfig& have, const Vocabulary& have_vocab, const ModelConfig& want,
                        const Vocabulary& want_vocab);

}  // namespace retro::nn
