// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "retro/nn/model.hpp"

namespace retro::nn {

/// Self-attention keys and values of every decoded position, per layer,
/// stored row-major as (positions x model_dim).
template <class T>
struct DecoderCache {
  std::vector<std::vector<T>> keys;
  std::vector<std::vector<T>> values;
  int length = 0;
};

/// Step-by-step decoder over one encoded source. Produces the same logits as
/// the full forward pass, one position at a time.
template <class T>
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ParameterSet<T>& params, const ModelConfig& cfg, const std::vector<int>& src)
      : p_(params), cfg_(cfg), layout_(cfg), pe_(positional_encoding<T>(cfg.max_seq_len, cfg.model_dim)) {
    detail::Pass<T> pass(params, cfg, layout_, nullptr);
    const std::vector<const std::vector<int>*> srcs{&src};
    const Mat<T> memory = pass.encode(srcs);
    for (const auto& s : layout_.decoder) {
      cross_k_.push_back(detail::affine(memory, p_[s.cross.wk], p_[s.cross.bk]));
      cross_v_.push_back(detail::affine(memory, p_[s.cross.wv], p_[s.cross.bv]));
    }
  }

  DecoderCache<T> empty_cache() const {
    DecoderCache<T> c;
    c.keys.resize(layout_.decoder.size());
    c.values.resize(layout_.decoder.size());
    return c;
  }

  /// Feeds `tokens[i]` to hypothesis `caches[i]` at its next position and
  /// returns one logits row per hypothesis.
  Mat<T> step(std::span<DecoderCache<T>* const> caches, std::span<const int> tokens) const {
    const Eigen::Index n = static_cast<Eigen::Index>(caches.size()), d = cfg_.model_dim;
    const int heads = cfg_.num_heads;
    const Eigen::Index dh = d / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const T eps = static_cast<T>(cfg_.layernorm_epsilon);
    const T embed_scale = std::sqrt(static_cast<T>(d));

    Mat<T> x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int pos = caches[i]->length;
      if (pos >= cfg_.max_seq_len) throw Error(ErrorKind::SequenceTooLong, "decoder position exceeds max_seq_len");
      x.row(i) = p_[layout_.embed].row(tokens[i]) * embed_scale + pe_.row(pos);
    }
    detail::NormCache<T> scratch;
    for (std::size_t l = 0; l < layout_.decoder.size(); ++l) {
      const DecoderLayerSlots& s = layout_.decoder[l];
      Mat<T> h = detail::norm_forward(x, p_[s.ln1.scale], p_[s.ln1.offset], eps, scratch);
      const Mat<T> q = detail::affine(h, p_[s.self.wq], p_[s.self.bq]);
      const Mat<T> k = detail::affine(h, p_[s.self.wk], p_[s.self.bk]);
      const Mat<T> v = detail::affine(h, p_[s.self.wv], p_[s.self.bv]);
      Mat<T> o(n, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        DecoderCache<T>& c = *caches[i];
        c.keys[l].insert(c.keys[l].end(), k.row(i).data(), k.row(i).data() + d);
        c.values[l].insert(c.values[l].end(), v.row(i).data(), v.row(i).data() + d);
        const Eigen::Index len = c.length + 1;
        const Eigen::Map<const Mat<T>> kc(c.keys[l].data(), len, d), vc(c.values[l].data(), len, d);
        for (int hd = 0; hd < heads; ++hd) {
          Mat<T> pr = q.block(i, hd * dh, 1, dh) * kc.block(0, hd * dh, len, dh).transpose();
          pr *= scale;
          detail::softmax_rows(pr);
          o.block(i, hd * dh, 1, dh).noalias() = pr * vc.block(0, hd * dh, len, dh);
        }
      }
      x += detail::affine(o, p_[s.self.wo], p_[s.self.bo]);

      h = detail::norm_forward(x, p_[s.ln2.scale], p_[s.ln2.offset], eps, scratch);
      const Mat<T> cq = detail::affine(h, p_[s.cross.wq], p_[s.cross.bq]);
      const Mat<T>& ck = cross_k_[l];
      const Mat<T>& cv = cross_v_[l];
      for (int hd = 0; hd < heads; ++hd) {
        Mat<T> pr = cq.block(0, hd * dh, n, dh) * ck.block(0, hd * dh, ck.rows(), dh).transpose();
        pr *= scale;
        detail::softmax_rows(pr);
        o.block(0, hd * dh, n, dh).noalias() = pr * cv.block(0, hd * dh, cv.rows(), dh);
      }
      x += detail::affine(o, p_[s.cross.wo], p_[s.cross.bo]);

      h = detail::norm_forward(x, p_[s.ln3.scale], p_[s.ln3.offset], eps, scratch);
      Mat<T> a = detail::affine(h, p_[s.ffn.w1], p_[s.ffn.b1]);
      a = a.unaryExpr([](T z) { return detail::gelu(z); });
      x += detail::affine(a, p_[s.ffn.w2], p_[s.ffn.b2]);
    }
    for (Eigen::Index i = 0; i < n; ++i) ++caches[i]->length;
    const Mat<T> y = detail::norm_forward(x, p_[layout_.decoder_norm.scale], p_[layout_.decoder_norm.offset], eps, scratch);
    return detail::affine(y, p_[layout_.out_w], p_[layout_.out_b]);
  }

 private:
  const ParameterSet<T>& p_;
  const ModelConfig& cfg_;
  Layout layout_;
  Mat<T> pe_;
  std::vector<Mat<T>> cross_k_, cross_v_;
};

}  // namespace retro::nn
