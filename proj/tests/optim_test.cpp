// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "retro/error.hpp"
#include "retro/optim.hpp"

namespace retro::optim {
namespace {

nn::ParameterSet<double> scalar(double value) {
  nn::ParameterSet<double> p;
  p.names = {"theta"};
  p.tensors = {nn::Mat<double>::Constant(1, 1, value)};
  return p;
}

TEST(Adam, HandComputedFirstStep) {
  auto theta = scalar(0.0);
  auto state = AdamState<double>::fresh(theta, {.beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8});
  adam_step(theta, scalar(1.0), state, 0.1);
  // m = 0.1, v = 0.001; m_hat = v_hat = 1
  EXPECT_NEAR(theta[0](0, 0), -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(theta[0](0, 0), -0.0999999990, 1e-10);
  EXPECT_EQ(state.t, 1u);
  EXPECT_EQ(theta.step, 1u);
}

TEST(Adam, SecondStepMatchesClosedForm) {
  auto theta = scalar(0.5);
  auto state = AdamState<double>::fresh(theta);
  adam_step(theta, scalar(2.0), state, 0.01);
  adam_step(theta, scalar(-1.0), state, 0.01);
  double m = 0.0, v = 0.0, x = 0.5;
  const double gs[] = {2.0, -1.0};
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * gs[t - 1];
    v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(theta[0](0, 0), x, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto theta = scalar(0.25);
  auto state = AdamState<double>::fresh(theta);
  adam_step(theta, scalar(0.0), state, 0.1);
  EXPECT_EQ(theta[0](0, 0), 0.25);
}

TEST(Adam, DeterministicOnCopies) {
  auto a = scalar(1.0), b = scalar(1.0);
  auto sa = AdamState<double>::fresh(a), sb = AdamState<double>::fresh(b);
  adam_step(a, scalar(0.3), sa, 0.05);
  adam_step(b, scalar(0.3), sb, 0.05);
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(sa.v == sb.v);
}

TEST(Adam, Errors) {
  auto theta = scalar(0.0);
  auto state = AdamState<double>::fresh(theta);
  try {
    adam_step(theta, scalar(std::nan("")), state, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteGradient);
  }
  nn::ParameterSet<double> wrong;
  wrong.names = {"other"};
  wrong.tensors = {nn::Mat<double>::Zero(2, 1)};
  try {
    adam_step(theta, wrong, state, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(ClipGlobalNorm, ScalesOnlyAboveThreshold) {
  nn::ParameterSet<double> g;
  g.names = {"a", "b"};
  g.tensors = {nn::Mat<double>::Constant(1, 1, 3.0), nn::Mat<double>::Constant(1, 1, 4.0)};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g[0](0, 0), 3.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 2.5), 5.0);
  EXPECT_DOUBLE_EQ(g[0](0, 0), 1.5);
  EXPECT_DOUBLE_EQ(g[1](0, 0), 2.0);
}

TEST(CyclicLr, Fixtures) {
  Schedule s{.kind = ScheduleKind::Cyclic, .warmup = 10, .peak_lr = 1e-3, .min_lr = 1e-5, .period = 100};
  EXPECT_NEAR(cyclic_lr(s, 4), 5e-4, 1e-12);
  EXPECT_NEAR(cyclic_lr(s, 9), 1e-3, 1e-12);
  EXPECT_NEAR(cyclic_lr(s, 10), 1e-3, 1e-12);
  EXPECT_NEAR(cyclic_lr(s, 60), 1e-5, 1e-12);
  EXPECT_NEAR(cyclic_lr(s, 35), 1e-3 - (1e-3 - 1e-5) * 0.5, 1e-12);
  for (std::uint64_t k = 0; k < 500; ++k) EXPECT_EQ(cyclic_lr(s, 10 + k), cyclic_lr(s, 10 + k + 100));
}

TEST(InverseSqrtLr, Fixtures) {
  Schedule s{.kind = ScheduleKind::InverseSqrt, .warmup = 40, .peak_lr = 2e-3, .min_lr = 0.0, .period = 2};
  EXPECT_NEAR(inverse_sqrt_lr(s, 39), 2e-3, 1e-12);
  EXPECT_NEAR(inverse_sqrt_lr(s, 159), 1e-3, 1e-12);
  EXPECT_NEAR(inverse_sqrt_lr(s, 0), 2e-3 / 40, 1e-12);
  for (std::uint64_t k = 40; k < 2000; ++k) EXPECT_LE(inverse_sqrt_lr(s, k + 1), inverse_sqrt_lr(s, k));
  EXPECT_EQ(s.at(100), inverse_sqrt_lr(s, 100));
}

TEST(Schedule, DefaultsAndValidation) {
  const Schedule s = Schedule::for_iterations(ScheduleKind::Cyclic, 5000);
  EXPECT_EQ(s.warmup, 100u);
  EXPECT_EQ(s.period, 500u);
  EXPECT_EQ(s.peak_lr, 1e-3);
  EXPECT_EQ(s.min_lr, 1e-5);
  EXPECT_NO_THROW(s.validate());
  Schedule bad = s;
  bad.period = 1;
  EXPECT_THROW(bad.validate(), Error);
  bad = s;
  bad.min_lr = 2e-3;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_EQ(schedule_kind_from_string("inverse_sqrt"), ScheduleKind::InverseSqrt);
  EXPECT_THROW(schedule_kind_from_string("cosine"), Error);
}

}  // namespace
}  // namespace retro::optim
