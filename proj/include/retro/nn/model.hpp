// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm Transformer encoder-decoder with hand-written reverse mode.
//
// Sequences are packed: every sample of a shard is stacked row-wise into one
// matrix and attention runs per sample segment, so no padding is ever
// materialized. Layer structure (both stacks end with a final LayerNorm):
//
//   encoder layer:  x += Drop(SelfAttn(LN1(x)));  x += Drop(FFN(LN2(x)))
//   decoder layer:  y += Drop(CausalSelfAttn(LN1(y)))
//                   y += Drop(CrossAttn(LN2(y), enc))
//                   y += Drop(FFN(LN3(y)))
//
// Inputs are embed[token] * sqrt(model_dim) + sinusoid(pos), with the
// embedding shared by encoder and decoder. FFN uses the tanh form of GELU.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retro/error.hpp"
#include "retro/nn/params.hpp"
#include "retro/nn/vocab.hpp"
#include "retro/parallel.hpp"
#include "retro/random.hpp"

namespace retro::nn {

/// One training pair of token ids, without BOS/EOS. The decoder is fed
/// BOS + tgt and predicts tgt + EOS.
struct SequencePair {
  std::vector<int> src;
  std::vector<int> tgt;
};

struct LossOptions {
  bool training = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
  double label_smoothing = 0.0;
  /// Samples per gradient shard. Shards may run concurrently; their
  /// gradients are added in shard order.
  std::size_t shard_size = 16;
};

/// Token-summed negative log-likelihood of the gold continuation.
struct LossValue {
  double total = 0.0;
  std::size_t tokens = 0;
  double mean = 0.0;
  /// Summed training objective; differs from `total` only under label
  /// smoothing.
  double objective = 0.0;

  double perplexity() const { return std::exp(mean); }
};

template <class T>
ParameterSet<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Layout layout(cfg);
  ParameterSet<T> p = ParameterSet<T>::zeros(layout);
  Rng rng(seed);
  for (std::size_t i = 0; i < layout.specs.size(); ++i) {
    const TensorSpec& s = layout.specs[i];
    Mat<T>& t = p[i];
    switch (s.role) {
      case TensorRole::Weight: {
        const double bound = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
        for (Eigen::Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<T>(rng.uniform(-bound, bound));
        break;
      }
      case TensorRole::NormScale:
        t.setOnes();
        break;
      case TensorRole::Bias:
      case TensorRole::NormOffset:
        break;
    }
  }
  return p;
}

/// Sinusoidal position table, rows = positions.
template <class T>
Mat<T> positional_encoding(int length, int dim) {
  Mat<T> pe(length, dim);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
      pe(pos, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < dim) pe(pos, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

namespace detail {

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct Packing {
  std::vector<Eigen::Index> offset;
  std::vector<Eigen::Index> length;

  Eigen::Index rows() const { return offset.empty() ? 0 : offset.back() + length.back(); }
  std::size_t count() const { return offset.size(); }
};

template <class T>
void add_bias(Mat<T>& y, const Mat<T>& b) {
  y.rowwise() += b.row(0);
}

template <class T>
Mat<T> affine(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
  Mat<T> y = x * w;
  add_bias(y, b);
  return y;
}

/// Accumulates parameter gradients of y = x w + b and returns dL/dx.
template <class T>
Mat<T> affine_backward(const Mat<T>& x, const Mat<T>& w, const Mat<T>& dy, Mat<T>* dw, Mat<T>* db) {
  if (dw) dw->noalias() += x.transpose() * dy;
  if (db) *db += dy.colwise().sum();
  return dy * w.transpose();
}

template <class T>
struct NormCache {
  Mat<T> xhat;
  Vec<T> rstd;
};

template <class T>
Mat<T> norm_forward(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, T eps, NormCache<T>& c) {
  const Vec<T> mean = x.rowwise().mean();
  Mat<T> xc = x.colwise() - mean;
  const Vec<T> var = xc.array().square().rowwise().mean();
  c.rstd = (var.array() + eps).rsqrt();
  c.xhat = xc.array().colwise() * c.rstd.array();
  Mat<T> y = c.xhat.array().rowwise() * g.row(0).array();
  add_bias(y, b);
  return y;
}

template <class T>
Mat<T> norm_backward(const Mat<T>& dy, const Mat<T>& g, const NormCache<T>& c, Mat<T>& dg, Mat<T>& db) {
  dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  const Mat<T> dxh = dy.array().rowwise() * g.row(0).array();
  const Vec<T> m1 = dxh.rowwise().mean();
  const Vec<T> m2 = (dxh.array() * c.xhat.array()).rowwise().mean();
  Mat<T> dx = (dxh.colwise() - m1) - (c.xhat.array().colwise() * m2.array()).matrix();
  return dx.array().colwise() * c.rstd.array();
}

template <class T>
struct AttentionCache {
  Mat<T> hq, hkv, q, k, v, o;
  std::vector<Mat<T>> probs;  // [segment * heads + head]
};

/// Row-wise softmax in place; -inf entries become 0.
template <class T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto row = s.row(i);
    const T m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

template <class T>
Mat<T> attention_forward(const ParameterSet<T>& p, const AttentionSlots& a, int heads, const Mat<T>& hq,
                         const Mat<T>& hkv, const Packing& qp, const Packing& kp, bool causal, AttentionCache<T>& c) {
  const Eigen::Index d = hq.cols(), dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  c.hq = hq;
  c.hkv = hkv;
  c.q = affine(hq, p[a.wq], p[a.bq]);
  c.k = affine(hkv, p[a.wk], p[a.bk]);
  c.v = affine(hkv, p[a.wv], p[a.bv]);
  c.o.setZero(hq.rows(), d);
  c.probs.assign(qp.count() * static_cast<std::size_t>(heads), Mat<T>());
  for (std::size_t s = 0; s < qp.count(); ++s) {
    const Eigen::Index qo = qp.offset[s], ql = qp.length[s], ko = kp.offset[s], kl = kp.length[s];
    for (int h = 0; h < heads; ++h) {
      Mat<T>& pr = c.probs[s * heads + h];
      pr.noalias() = c.q.block(qo, h * dh, ql, dh) * c.k.block(ko, h * dh, kl, dh).transpose();
      pr *= scale;
      if (causal) {
        for (Eigen::Index i = 0; i < ql; ++i) {
          for (Eigen::Index j = i + 1; j < kl; ++j) pr(i, j) = -std::numeric_limits<T>::infinity();
        }
      }
      softmax_rows(pr);
      c.o.block(qo, h * dh, ql, dh).noalias() = pr * c.v.block(ko, h * dh, kl, dh);
    }
  }
  return affine(c.o, p[a.wo], p[a.bo]);
}

/// Returns (dL/dhq, dL/dhkv).
template <class T>
std::pair<Mat<T>, Mat<T>> attention_backward(const ParameterSet<T>& p, ParameterSet<T>& g, const AttentionSlots& a,
                                             int heads, const Mat<T>& dout, const Packing& qp, const Packing& kp,
                                             const AttentionCache<T>& c) {
  const Eigen::Index d = c.hq.cols(), dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Mat<T> d_o = affine_backward(c.o, p[a.wo], dout, &g[a.wo], &g[a.bo]);
  Mat<T> dq = Mat<T>::Zero(c.q.rows(), d);
  Mat<T> dk = Mat<T>::Zero(c.k.rows(), d);
  Mat<T> dv = Mat<T>::Zero(c.v.rows(), d);
  for (std::size_t s = 0; s < qp.count(); ++s) {
    const Eigen::Index qo = qp.offset[s], ql = qp.length[s], ko = kp.offset[s], kl = kp.length[s];
    for (int h = 0; h < heads; ++h) {
      const Mat<T>& pr = c.probs[s * heads + h];
      const auto dob = d_o.block(qo, h * dh, ql, dh);
      dv.block(ko, h * dh, kl, dh).noalias() += pr.transpose() * dob;
      Mat<T> dp = dob * c.v.block(ko, h * dh, kl, dh).transpose();
      const Vec<T> inner = (dp.array() * pr.array()).rowwise().sum();
      Mat<T> ds = pr.array() * (dp.colwise() - inner).array();
      ds *= scale;
      dq.block(qo, h * dh, ql, dh).noalias() += ds * c.k.block(ko, h * dh, kl, dh);
      dk.block(ko, h * dh, kl, dh).noalias() += ds.transpose() * c.q.block(qo, h * dh, ql, dh);
    }
  }
  Mat<T> dhq = affine_backward(c.hq, p[a.wq], dq, &g[a.wq], &g[a.bq]);
  Mat<T> dhkv = affine_backward(c.hkv, p[a.wk], dk, &g[a.wk], &g[a.bk]);
  dhkv += affine_backward(c.hkv, p[a.wv], dv, &g[a.wv], &g[a.bv]);
  return {std::move(dhq), std::move(dhkv)};
}

template <class T>
T gelu(T a) {
  constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * a * (T(1) + std::tanh(c * (a + T(0.044715) * a * a * a)));
}

template <class T>
T gelu_grad(T a) {
  constexpr T c = static_cast<T>(0.7978845608028654);
  const T t = std::tanh(c * (a + T(0.044715) * a * a * a));
  return T(0.5) * (T(1) + t) + T(0.5) * a * (T(1) - t * t) * c * (T(1) + T(3 * 0.044715) * a * a);
}

template <class T>
struct FeedForwardCache {
  Mat<T> x, pre, act;
};

template <class T>
Mat<T> ffn_forward(const ParameterSet<T>& p, const FeedForwardSlots& f, const Mat<T>& x, FeedForwardCache<T>& c) {
  c.x = x;
  c.pre = affine(x, p[f.w1], p[f.b1]);
  c.act = c.pre.unaryExpr([](T v) { return gelu(v); });
  return affine(c.act, p[f.w2], p[f.b2]);
}

template <class T>
Mat<T> ffn_backward(const ParameterSet<T>& p, ParameterSet<T>& g, const FeedForwardSlots& f, const Mat<T>& dy,
                    const FeedForwardCache<T>& c) {
  Mat<T> dact = affine_backward(c.act, p[f.w2], dy, &g[f.w2], &g[f.b2]);
  dact.array() *= c.pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
  return affine_backward(c.x, p[f.w1], dact, &g[f.w1], &g[f.b1]);
}

/// Inverted dropout. An empty mask means identity.
template <class T>
struct Dropout {
  Mat<T> mask;

  void apply(Mat<T>& x, double rate, Rng* rng) {
    if (!rng || rate <= 0.0) return;
    const T keep = static_cast<T>(1.0 / (1.0 - rate));
    mask.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < rate ? T(0) : keep;
    x.array() *= mask.array();
  }
  void backward(Mat<T>& dy) const {
    if (mask.size() > 0) dy.array() *= mask.array();
  }
};

template <class T>
struct EncoderLayerCache {
  NormCache<T> ln1, ln2;
  AttentionCache<T> self;
  FeedForwardCache<T> ffn;
  Dropout<T> drop_self, drop_ffn;
};

template <class T>
struct DecoderLayerCache {
  NormCache<T> ln1, ln2, ln3;
  AttentionCache<T> self, cross;
  FeedForwardCache<T> ffn;
  Dropout<T> drop_self, drop_cross, drop_ffn;
};

/// One forward/backward pass over a shard of packed sequences.
template <class T>
class Pass {
 public:
  Pass(const ParameterSet<T>& params, const ModelConfig& cfg, const Layout& layout, Rng* dropout_rng)
      : p_(params), cfg_(cfg), L_(layout), rng_(dropout_rng) {}

  /// Encoder output rows for the packed sources.
  Mat<T> encode(std::span<const std::vector<int>* const> srcs) {
    src_ = pack(srcs, false);
    Mat<T> x = embed(src_tokens_, src_, enc_drop_);
    enc_.resize(L_.encoder.size());
    const T eps = static_cast<T>(cfg_.layernorm_epsilon);
    for (std::size_t l = 0; l < L_.encoder.size(); ++l) {
      const EncoderLayerSlots& s = L_.encoder[l];
      EncoderLayerCache<T>& c = enc_[l];
      Mat<T> h = norm_forward(x, p_[s.ln1.scale], p_[s.ln1.offset], eps, c.ln1);
      Mat<T> a = attention_forward(p_, s.self, cfg_.num_heads, h, h, src_, src_, false, c.self);
      c.drop_self.apply(a, cfg_.dropout_rate, rng_);
      x += a;
      h = norm_forward(x, p_[s.ln2.scale], p_[s.ln2.offset], eps, c.ln2);
      Mat<T> f = ffn_forward(p_, s.ffn, h, c.ffn);
      c.drop_ffn.apply(f, cfg_.dropout_rate, rng_);
      x += f;
    }
    return norm_forward(x, p_[L_.encoder_norm.scale], p_[L_.encoder_norm.offset], eps, enc_norm_);
  }

  /// Logits for the packed decoder inputs (each already starting with BOS).
  Mat<T> decode(std::span<const std::vector<int>* const> tgt_ins, const Mat<T>& memory) {
    tgt_ = pack(tgt_ins, true);
    Mat<T> y = embed(tgt_tokens_, tgt_, dec_drop_);
    dec_.resize(L_.decoder.size());
    const T eps = static_cast<T>(cfg_.layernorm_epsilon);
    for (std::size_t l = 0; l < L_.decoder.size(); ++l) {
      const DecoderLayerSlots& s = L_.decoder[l];
      DecoderLayerCache<T>& c = dec_[l];
      Mat<T> h = norm_forward(y, p_[s.ln1.scale], p_[s.ln1.offset], eps, c.ln1);
      Mat<T> a = attention_forward(p_, s.self, cfg_.num_heads, h, h, tgt_, tgt_, true, c.self);
      c.drop_self.apply(a, cfg_.dropout_rate, rng_);
      y += a;
      h = norm_forward(y, p_[s.ln2.scale], p_[s.ln2.offset], eps, c.ln2);
      a = attention_forward(p_, s.cross, cfg_.num_heads, h, memory, tgt_, src_, false, c.cross);
      c.drop_cross.apply(a, cfg_.dropout_rate, rng_);
      y += a;
      h = norm_forward(y, p_[s.ln3.scale], p_[s.ln3.offset], eps, c.ln3);
      Mat<T> f = ffn_forward(p_, s.ffn, h, c.ffn);
      c.drop_ffn.apply(f, cfg_.dropout_rate, rng_);
      y += f;
    }
    dec_out_ = norm_forward(y, p_[L_.decoder_norm.scale], p_[L_.decoder_norm.offset], eps, dec_norm_);
    return affine(dec_out_, p_[L_.out_w], p_[L_.out_b]);
  }

  void backward(const Mat<T>& dlogits, ParameterSet<T>& g) {
    Mat<T> dy = affine_backward(dec_out_, p_[L_.out_w], dlogits, &g[L_.out_w], &g[L_.out_b]);
    dy = norm_backward(dy, p_[L_.decoder_norm.scale], dec_norm_, g[L_.decoder_norm.scale], g[L_.decoder_norm.offset]);
    Mat<T> dmem = Mat<T>::Zero(src_.rows(), cfg_.model_dim);
    for (std::size_t l = L_.decoder.size(); l-- > 0;) {
      const DecoderLayerSlots& s = L_.decoder[l];
      const DecoderLayerCache<T>& c = dec_[l];
      Mat<T> df = dy;
      c.drop_ffn.backward(df);
      df = ffn_backward(p_, g, s.ffn, df, c.ffn);
      dy += norm_backward(df, p_[s.ln3.scale], c.ln3, g[s.ln3.scale], g[s.ln3.offset]);

      Mat<T> da = dy;
      c.drop_cross.backward(da);
      auto [dq, dkv] = attention_backward(p_, g, s.cross, cfg_.num_heads, da, tgt_, src_, c.cross);
      dmem += dkv;
      dy += norm_backward(dq, p_[s.ln2.scale], c.ln2, g[s.ln2.scale], g[s.ln2.offset]);

      da = dy;
      c.drop_self.backward(da);
      auto [dsq, dskv] = attention_backward(p_, g, s.self, cfg_.num_heads, da, tgt_, tgt_, c.self);
      dsq += dskv;
      dy += norm_backward(dsq, p_[s.ln1.scale], c.ln1, g[s.ln1.scale], g[s.ln1.offset]);
    }
    embed_backward(dy, tgt_tokens_, dec_drop_, g);

    Mat<T> dx = norm_backward(dmem, p_[L_.encoder_norm.scale], enc_norm_, g[L_.encoder_norm.scale],
                              g[L_.encoder_norm.offset]);
    for (std::size_t l = L_.encoder.size(); l-- > 0;) {
      const EncoderLayerSlots& s = L_.encoder[l];
      const EncoderLayerCache<T>& c = enc_[l];
      Mat<T> df = dx;
      c.drop_ffn.backward(df);
      df = ffn_backward(p_, g, s.ffn, df, c.ffn);
      dx += norm_backward(df, p_[s.ln2.scale], c.ln2, g[s.ln2.scale], g[s.ln2.offset]);

      Mat<T> da = dx;
      c.drop_self.backward(da);
      auto [dq, dkv] = attention_backward(p_, g, s.self, cfg_.num_heads, da, src_, src_, c.self);
      dq += dkv;
      dx += norm_backward(dq, p_[s.ln1.scale], c.ln1, g[s.ln1.scale], g[s.ln1.offset]);
    }
    embed_backward(dx, src_tokens_, enc_drop_, g);
  }

  const Packing& target_packing() const { return tgt_; }

 private:
  Packing pack(std::span<const std::vector<int>* const> seqs, bool target) {
    Packing pk;
    std::vector<int>& tokens = target ? tgt_tokens_ : src_tokens_;
    tokens.clear();
    Eigen::Index off = 0;
    for (const auto* s : seqs) {
      if (s->empty()) throw Error(ErrorKind::ShapeMismatch, "empty sequence");
      if (static_cast<int>(s->size()) > cfg_.max_seq_len) {
        throw Error(ErrorKind::SequenceTooLong, "sequence of " + std::to_string(s->size()) +
                                                    " tokens exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
      }
      for (int t : *s) {
        if (t < 0 || t >= cfg_.vocab_size) throw Error(ErrorKind::ShapeMismatch, "token id out of range");
        tokens.push_back(t);
      }
      pk.offset.push_back(off);
      pk.length.push_back(static_cast<Eigen::Index>(s->size()));
      off += static_cast<Eigen::Index>(s->size());
    }
    return pk;
  }

  Mat<T> embed(const std::vector<int>& tokens, const Packing& pk, Dropout<T>& drop) {
    const Mat<T>& e = p_[L_.embed];
    const T scale = std::sqrt(static_cast<T>(cfg_.model_dim));
    const Mat<T>& pe = position_table();
    Mat<T> x(static_cast<Eigen::Index>(tokens.size()), cfg_.model_dim);
    for (std::size_t s = 0; s < pk.count(); ++s) {
      for (Eigen::Index i = 0; i < pk.length[s]; ++i) {
        const Eigen::Index r = pk.offset[s] + i;
        x.row(r) = e.row(tokens[static_cast<std::size_t>(r)]) * scale + pe.row(i);
      }
    }
    drop.apply(x, cfg_.dropout_rate, rng_);
    return x;
  }

  void embed_backward(Mat<T>& dx, const std::vector<int>& tokens, const Dropout<T>& drop, ParameterSet<T>& g) {
    drop.backward(dx);
    const T scale = std::sqrt(static_cast<T>(cfg_.model_dim));
    Mat<T>& de = g[L_.embed];
    for (std::size_t r = 0; r < tokens.size(); ++r) de.row(tokens[r]) += dx.row(static_cast<Eigen::Index>(r)) * scale;
  }

  const Mat<T>& position_table() {
    if (pe_.rows() != cfg_.max_seq_len) pe_ = positional_encoding<T>(cfg_.max_seq_len, cfg_.model_dim);
    return pe_;
  }

  const ParameterSet<T>& p_;
  const ModelConfig& cfg_;
  const Layout& L_;
  Rng* rng_;
  Mat<T> pe_;

  Packing src_, tgt_;
  std::vector<int> src_tokens_, tgt_tokens_;
  Dropout<T> enc_drop_, dec_drop_;
  std::vector<EncoderLayerCache<T>> enc_;
  std::vector<DecoderLayerCache<T>> dec_;
  NormCache<T> enc_norm_, dec_norm_;
  Mat<T> dec_out_;
};

inline std::vector<int> decoder_input(const std::vector<int>& tgt) {
  std::vector<int> in;
  in.reserve(tgt.size() + 1);
  in.push_back(Vocabulary::kBos);
  in.insert(in.end(), tgt.begin(), tgt.end());
  return in;
}

/// Loss (and optionally gradient) of one shard; the gradient is the
/// derivative of the summed, possibly smoothed, cross-entropy.
template <class T>
LossValue shard_loss(const ParameterSet<T>& params, const ModelConfig& cfg, const Layout& layout,
                     std::span<const SequencePair> shard, ParameterSet<T>* grad, const LossOptions& opts,
                     std::uint64_t shard_index) {
  std::optional<Rng> rng;
  if (opts.training && cfg.dropout_rate > 0.0) rng.emplace(mix_seed(opts.dropout_seed, shard_index, 0x64726f70));
  Pass<T> pass(params, cfg, layout, rng ? &*rng : nullptr);

  std::vector<std::vector<int>> tgt_in(shard.size());
  std::vector<const std::vector<int>*> srcs, tgts;
  for (std::size_t i = 0; i < shard.size(); ++i) {
    tgt_in[i] = decoder_input(shard[i].tgt);
    srcs.push_back(&shard[i].src);
    tgts.push_back(&tgt_in[i]);
  }
  const Mat<T> memory = pass.encode(srcs);
  Mat<T> logits = pass.decode(tgts, memory);

  const double eps = opts.label_smoothing;
  const T uniform_mass = static_cast<T>(eps / cfg.vocab_size);
  LossValue loss;
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < shard.size(); ++i) {
    const auto& tgt = shard[i].tgt;
    for (std::size_t t = 0; t <= tgt.size(); ++t, ++row) {
      const int gold = t < tgt.size() ? tgt[t] : Vocabulary::kEos;
      auto r = logits.row(row);
      const T m = r.maxCoeff();
      const T lse = m + std::log((r.array() - m).exp().sum());
      if (gold == Vocabulary::kPad) {
        r.setZero();
        continue;
      }
      const double nll = static_cast<double>(lse - r(gold));
      loss.total += nll;
      loss.objective += (1.0 - eps) * nll;
      if (eps > 0.0) loss.objective += eps * static_cast<double>(lse - r.mean());
      ++loss.tokens;
      if (grad) {
        r = (r.array() - lse).exp();
        if (eps > 0.0) r.array() -= uniform_mass;
        r(gold) -= static_cast<T>(1.0 - eps);
      }
    }
  }
  if (grad) pass.backward(logits, *grad);
  return loss;
}

}  // namespace detail

/// Evaluation-mode logits, one row per decoder input position.
template <class T>
Mat<T> forward(const ParameterSet<T>& params, const ModelConfig& cfg, const std::vector<int>& src,
               const std::vector<int>& tgt_in) {
  const Layout layout(cfg);
  detail::Pass<T> pass(params, cfg, layout, nullptr);
  const std::vector<const std::vector<int>*> s{&src}, t{&tgt_in};
  const Mat<T> memory = pass.encode(s);
  return pass.decode(t, memory);
}

/// Summed NLL over the batch and, when `grad` is non-null, its exact
/// gradient written into `grad` (resized to the parameter layout).
template <class T>
LossValue loss_and_grad(const ParameterSet<T>& params, const ModelConfig& cfg, std::span<const SequencePair> batch,
                        ParameterSet<T>* grad, const LossOptions& opts = {}) {
  if (batch.empty()) throw Error(ErrorKind::EmptyDataset, "empty batch");
  const Layout layout(cfg);
  const std::size_t shard_size = std::max<std::size_t>(1, opts.shard_size);
  const std::size_t shards = (batch.size() + shard_size - 1) / shard_size;
  std::vector<LossValue> losses(shards);
  std::vector<ParameterSet<T>> grads(grad ? shards : 0);
  parallel_for(shards, [&](std::size_t s) {
    const std::size_t begin = s * shard_size;
    const auto part = batch.subspan(begin, std::min(shard_size, batch.size() - begin));
    ParameterSet<T>* g = nullptr;
    if (grad) {
      grads[s] = ParameterSet<T>::zeros_like(params);
      g = &grads[s];
    }
    losses[s] = detail::shard_loss(params, cfg, layout, part, g, opts, s);
  });
  LossValue total;
  for (const auto& l : losses) {
    total.total += l.total;
    total.objective += l.objective;
    total.tokens += l.tokens;
  }
  total.mean = total.tokens ? total.total / static_cast<double>(total.tokens) : 0.0;
  if (grad) {
    *grad = std::move(grads[0]);
    for (std::size_t s = 1; s < shards; ++s) {
      for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += grads[s][i];
    }
  }
  return total;
}

}  // namespace retro::nn
