// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "retro/error.hpp"

namespace retro::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Architecture hyperparameters. Everything that changes tensor shapes or
/// forward semantics lives here; two checkpoints are interchangeable iff their
/// configs compare equal.
struct ModelConfig {
  int vocab_size = 0;
  int num_layers = 2;
  int model_dim = 64;
  int num_heads = 4;
  int ffn_dim = 128;
  int max_seq_len = 64;
  double dropout_rate = 0.0;
  double layernorm_epsilon = 1e-5;

  /// 2 layers, dim 64, 4 heads, FFN 128, length 64.
  static ModelConfig desk(int vocab_size) { return {.vocab_size = vocab_size}; }
  /// 3 layers, dim 500, length 200; heads (10) and FFN width (2048) are
  /// assumptions, as is dropout 0.1.
  static ModelConfig full_scale(int vocab_size) {
    return {vocab_size, 3, 500, 10, 2048, 200, 0.1, 1e-5};
  }

  int head_dim() const { return model_dim / num_heads; }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
    if (vocab_size <= 4) bad("vocab_size must exceed the 4 reserved tokens");
    if (num_layers < 1 || model_dim < 1 || num_heads < 1 || ffn_dim < 1 || max_seq_len < 2) {
      bad("layer, width and length settings must be positive");
    }
    if (model_dim % num_heads != 0) {
      bad("model_dim " + std::to_string(model_dim) + " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must be in [0, 1)");
    if (!(layernorm_epsilon > 0.0)) bad("layernorm_epsilon must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class TensorRole { Weight, Bias, NormScale, NormOffset };

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  TensorRole role = TensorRole::Weight;
};

struct AttentionSlots {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};
struct NormSlots {
  std::size_t scale, offset;
};
struct FeedForwardSlots {
  std::size_t w1, b1, w2, b2;
};
struct EncoderLayerSlots {
  NormSlots ln1;
  AttentionSlots self;
  NormSlots ln2;
  FeedForwardSlots ffn;
};
struct DecoderLayerSlots {
  NormSlots ln1;
  AttentionSlots self;
  NormSlots ln2;
  AttentionSlots cross;
  NormSlots ln3;
  FeedForwardSlots ffn;
};

/// Tensor order and shapes for a config. Slots index into ParameterSet.
struct Layout {
  std::vector<TensorSpec> specs;
  std::size_t embed = 0;
  std::vector<EncoderLayerSlots> encoder;
  NormSlots encoder_norm{};
  std::vector<DecoderLayerSlots> decoder;
  NormSlots decoder_norm{};
  std::size_t out_w = 0;
  std::size_t out_b = 0;

  explicit Layout(const ModelConfig& cfg) {
    const Eigen::Index d = cfg.model_dim, f = cfg.ffn_dim, v = cfg.vocab_size;
    auto add = [&](std::string name, Eigen::Index r, Eigen::Index c, TensorRole role) {
      specs.push_back({std::move(name), r, c, role});
      return specs.size() - 1;
    };
    auto norm = [&](const std::string& p) {
      return NormSlots{add(p + ".scale", 1, d, TensorRole::NormScale), add(p + ".offset", 1, d, TensorRole::NormOffset)};
    };
    auto attention = [&](const std::string& p) {
      AttentionSlots a{};
      a.wq = add(p + ".wq", d, d, TensorRole::Weight);
      a.bq = add(p + ".bq", 1, d, TensorRole::Bias);
      a.wk = add(p + ".wk", d, d, TensorRole::Weight);
      a.bk = add(p + ".bk", 1, d, TensorRole::Bias);
      a.wv = add(p + ".wv", d, d, TensorRole::Weight);
      a.bv = add(p + ".bv", 1, d, TensorRole::Bias);
      a.wo = add(p + ".wo", d, d, TensorRole::Weight);
      a.bo = add(p + ".bo", 1, d, TensorRole::Bias);
      return a;
    };
    auto ffn = [&](const std::string& p) {
      return FeedForwardSlots{add(p + ".w1", d, f, TensorRole::Weight), add(p + ".b1", 1, f, TensorRole::Bias),
                              add(p + ".w2", f, d, TensorRole::Weight), add(p + ".b2", 1, d, TensorRole::Bias)};
    };
    embed = add("embed", v, d, TensorRole::Weight);
    for (int l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      EncoderLayerSlots s{};
      s.ln1 = norm(p + ".ln1");
      s.self = attention(p + ".self");
      s.ln2 = norm(p + ".ln2");
      s.ffn = ffn(p + ".ffn");
      encoder.push_back(s);
    }
    encoder_norm = norm("enc.ln");
    for (int l = 0; l < cfg.num_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      DecoderLayerSlots s{};
      s.ln1 = norm(p + ".ln1");
      s.self = attention(p + ".self");
      s.ln2 = norm(p + ".ln2");
      s.cross = attention(p + ".cross");
      s.ln3 = norm(p + ".ln3");
      s.ffn = ffn(p + ".ffn");
      decoder.push_back(s);
    }
    decoder_norm = norm("dec.ln");
    out_w = add("out.w", d, v, TensorRole::Weight);
    out_b = add("out.b", 1, v, TensorRole::Bias);
  }
};

/// Named tensors plus a step counter. Gradients and optimizer moments use
/// the same type and layout.
template <class T>
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Mat<T>> tensors;
  std::uint64_t step = 0;

  std::size_t size() const { return tensors.size(); }
  Mat<T>& operator[](std::size_t i) { return tensors[i]; }
  const Mat<T>& operator[](std::size_t i) const { return tensors[i]; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw Error(ErrorKind::ShapeMismatch, "no tensor named " + name);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
  }

  static ParameterSet zeros_like(const ParameterSet& other) {
    ParameterSet z;
    z.names = other.names;
    for (const auto& t : other.tensors) z.tensors.push_back(Mat<T>::Zero(t.rows(), t.cols()));
    return z;
  }

  static ParameterSet zeros(const Layout& layout) {
    ParameterSet z;
    for (const auto& s : layout.specs) {
      z.names.push_back(s.name);
      z.tensors.push_back(Mat<T>::Zero(s.rows, s.cols));
    }
    return z;
  }

  void set_zero() {
    for (auto& t : tensors) t.setZero();
  }

  bool all_finite() const {
    for (const auto& t : tensors) {
      if (!t.allFinite()) return false;
    }
    return true;
  }

  bool same_shape(const ParameterSet& o) const {
    if (o.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (names[i] != o.names[i] || tensors[i].rows() != o.tensors[i].rows() || tensors[i].cols() != o.tensors[i].cols()) {
        return false;
      }
    }
    return true;
  }

  template <class U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    out.names = names;
    out.step = step;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }

  /// Bitwise equality of names, shapes, values and step.
  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.step != b.step || !a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto bytes = static_cast<std::size_t>(a.tensors[i].size()) * sizeof(T);
      if (bytes > 0 && std::memcmp(a.tensors[i].data(), b.tensors[i].data(), bytes) != 0) return false;
    }
    return true;
  }
};

}  // namespace retro::nn
