#include <cmath>

#include "gtest/gtest.h"

#include "charfuse/adam.hpp"
#include "charfuse/error.hpp"
#include "test_util.hpp"

namespace cf = charfuse;

namespace {

std::vector<cf::NamedVar> single_param(const std::string& name, cf::Tensor value) {
  return {{name, cf::make_leaf(std::move(value), true)}};
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto params = single_param("w", cf::Tensor({2, 2}, {1, 2, 3, 4}));
  cf::AdamState state = cf::AdamState::make(params);
  cf::adam_step(params, state, {0.1, 0.9, 0.999, 1e-8}, 1);
  EXPECT_EQ(params[0].var->value.data, (std::vector<double>{1, 2, 3, 4}));
}

// Hand oracle: m_hat = v_hat = 1 after the first step with g = 1, so the
// update is lr / (1 + eps) ~ lr.
TEST(Adam, FirstStepHandOracle) {
  auto params = single_param("theta", cf::Tensor::scalar(1.0));
  params[0].var->grad = {1.0};
  cf::AdamState state = cf::AdamState::make(params);
  cf::adam_step(params, state, {0.1, 0.9, 0.999, 1e-8}, 1);
  const double expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
  EXPECT_NEAR(params[0].var->value.data[0], expected, 1e-12);
  EXPECT_NEAR(params[0].var->value.data[0], 0.9, 1e-8);
}

TEST(Adam, IdenticalScalarsGetIdenticalUpdates) {
  std::vector<cf::NamedVar> params = {
      {"a", cf::make_leaf(cf::Tensor::scalar(0.7), true)},
      {"b", cf::make_leaf(cf::Tensor::scalar(0.7), true)}};
  params[0].var->grad = {0.3};
  params[1].var->grad = {0.3};
  cf::AdamState state = cf::AdamState::make(params);
  for (int step = 1; step <= 5; ++step) {
    cf::adam_step(params, state, {0.01, 0.9, 0.999, 1e-8}, step);
  }
  EXPECT_EQ(params[0].var->value.data[0], params[1].var->value.data[0]);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  auto params = single_param("embed.token", cf::Tensor::scalar(1.0));
  params[0].var->grad = {std::nan("")};
  cf::AdamState state = cf::AdamState::make(params);
  try {
    cf::adam_step(params, state, {0.1, 0.9, 0.999, 1e-8}, 1);
    FAIL() << "expected error";
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::Numerical);
    EXPECT_NE(std::string(e.what()).find("embed.token"), std::string::npos);
  }
}

TEST(Adam, RejectsStepZero) {
  auto params = single_param("w", cf::Tensor::scalar(1.0));
  cf::AdamState state = cf::AdamState::make(params);
  EXPECT_THROW(cf::adam_step(params, state, {0.1, 0.9, 0.999, 1e-8}, 0), cf::Error);
}

TEST(Adam, StateShapeMismatchRejected) {
  auto params = single_param("w", cf::Tensor::scalar(1.0));
  auto other = single_param("w", cf::Tensor({2}, {1, 2}));
  cf::AdamState state = cf::AdamState::make(other);
  EXPECT_THROW(cf::adam_step(params, state, {0.1, 0.9, 0.999, 1e-8}, 1), cf::Error);
}
