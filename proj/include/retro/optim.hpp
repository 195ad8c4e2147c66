// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "retro/error.hpp"
#include "retro/nn/params.hpp"

namespace retro::optim {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamState {
  nn::ParameterSet<T> m;
  nn::ParameterSet<T> v;
  std::uint64_t t = 0;
  AdamConfig hp;

  static AdamState fresh(const nn::ParameterSet<T>& like, AdamConfig hp = {}) {
    return {nn::ParameterSet<T>::zeros_like(like), nn::ParameterSet<T>::zeros_like(like), 0, hp};
  }
};

/// One bias-corrected Adam update with learning rate `lr`; also advances
/// params.step.
template <class T>
void adam_step(nn::ParameterSet<T>& params, const nn::ParameterSet<T>& grads, AdamState<T>& state, double lr) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
    throw Error(ErrorKind::ShapeMismatch, "parameter, gradient and moment layouts differ");
  }
  if (!grads.all_finite()) throw Error(ErrorKind::NonFiniteGradient, "gradient contains NaN or Inf");
  const AdamConfig& hp = state.hp;
  ++state.t;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
  const T step = static_cast<T>(lr / c1), root_c2 = static_cast<T>(std::sqrt(c2)), eps = static_cast<T>(hp.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    const auto g = grads[i].array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    // lr * (m / c1) / (sqrt(v / c2) + eps)
    params[i].array() -= step * m / (v.sqrt() / root_c2 + eps);
  }
  ++params.step;
}

/// Scales `grads` so that their global L2 norm is at most `max_norm`
/// (disabled when max_norm <= 0). Returns the norm before clipping.
template <class T>
double clip_global_norm(nn::ParameterSet<T>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads.tensors) sq += g.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& g : grads.tensors) g *= scale;
  }
  return norm;
}

enum class ScheduleKind { Cyclic, InverseSqrt };

inline std::string to_string(ScheduleKind k) { return k == ScheduleKind::Cyclic ? "cyclic" : "inverse_sqrt"; }

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "cyclic") return ScheduleKind::Cyclic;
  if (s == "inverse_sqrt") return ScheduleKind::InverseSqrt;
  throw Error(ErrorKind::Config, "unknown schedule '" + s + "' (expected cyclic or inverse_sqrt)");
}

struct Schedule {
  ScheduleKind kind = ScheduleKind::Cyclic;
  std::uint64_t warmup = 1;
  double peak_lr = 1e-3;
  double min_lr = 1e-5;
  std::uint64_t period = 2;

  /// Warm-up 2% and period 10% of the planned iterations.
  static Schedule for_iterations(ScheduleKind kind, std::uint64_t iterations) {
    Schedule s;
    s.kind = kind;
    s.warmup = std::max<std::uint64_t>(1, iterations / 50);
    s.period = std::max<std::uint64_t>(2, iterations / 10);
    return s;
  }

  void validate() const {
    if (warmup < 1) throw Error(ErrorKind::Config, "warm-up must be at least 1 step");
    if (!(peak_lr > min_lr && min_lr >= 0.0)) throw Error(ErrorKind::Config, "need peak_lr > min_lr >= 0");
    if (period < 2) throw Error(ErrorKind::Config, "cycle period must be at least 2");
  }

  double at(std::uint64_t step) const;
};

/// Linear warm-up to peak, then a triangular wave peak -> min -> peak with
/// period P.
inline double cyclic_lr(const Schedule& s, std::uint64_t step) {
  const double peak = s.peak_lr;
  if (step < s.warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(s.warmup);
  const double phase = static_cast<double>((step - s.warmup) % s.period) / static_cast<double>(s.period);
  const double depth = phase <= 0.5 ? 2.0 * phase : 2.0 * (1.0 - phase);
  return peak - (peak - s.min_lr) * depth;
}

/// peak * min((step+1)^-1/2 * W^1/2, (step+1) / W).
inline double inverse_sqrt_lr(const Schedule& s, std::uint64_t step) {
  const double n = static_cast<double>(step + 1), w = static_cast<double>(s.warmup);
  return s.peak_lr * std::min(std::sqrt(w) / std::sqrt(n), n / w);
}

inline double Schedule::at(std::uint64_t step) const {
  return kind == ScheduleKind::Cyclic ? cyclic_lr(*this, step) : inverse_sqrt_lr(*this, step);
}

}  // namespace retro::optim
