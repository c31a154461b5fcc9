#include "gtest/gtest.h"

#include "charfuse/error.hpp"
#include "charfuse/grad_check.hpp"
#include "charfuse/gradcheck_suite.hpp"
#include "charfuse/ops.hpp"
#include "test_util.hpp"

namespace cf = charfuse;
namespace op = charfuse::ops;

TEST(GradCheck, SumHasIdentityGradient) {
  cf::Rng rng(0);
  const cf::GradCheckResult r = cf::grad_check(
      [](cf::Graph& g, const cf::Var& x) { return op::sum_all(g, x); },
      testutil::random_tensor({4, 4}, rng), 1e-5, 1e-4);
  EXPECT_LT(r.max_relative_error, 1e-10);
}

// softmax rows sum to 1, so d(sum(softmax(x)))/dx vanishes identically.
TEST(GradCheck, SumOfSoftmaxHasZeroGradient) {
  cf::Rng rng(1);
  const cf::Tensor input = testutil::random_tensor({3, 5}, rng, 2.0);
  cf::Graph g;
  cf::Var leaf = cf::make_leaf(input, true);
  cf::Var loss = op::sum_all(g, op::softmax(g, leaf));
  g.backward(loss);
  for (double gv : leaf->grad) EXPECT_NEAR(gv, 0.0, 1e-12);

  const cf::GradCheckResult r = cf::grad_check(
      [](cf::Graph& g2, const cf::Var& x) {
        return op::sum_all(g2, op::softmax(g2, x));
      },
      input, 1e-5, 1e-4);
  EXPECT_TRUE(r.passed);
}

TEST(GradCheck, RejectsNonScalarFunctions) {
  cf::Rng rng(2);
  EXPECT_THROW(cf::grad_check([](cf::Graph& g, const cf::Var& x) { return x; },
                              testutil::random_tensor({2, 2}, rng), 1e-5, 1e-4),
               cf::Error);
}

TEST(GradCheck, RejectsOutOfRangeStep) {
  cf::Rng rng(3);
  EXPECT_THROW(
      cf::grad_check([](cf::Graph& g, const cf::Var& x) { return op::sum_all(g, x); },
                     testutil::random_tensor({2, 2}, rng), 1e-2, 1e-4),
      cf::Error);
}

// Every primitive op against central finite differences on random shapes.
TEST(GradCheck, PrimitiveOpSuitePasses) {
  const cf::GradCheckSuiteResult result = cf::gradcheck_primitive_ops(0, 1e-5, 1e-4);
  for (const cf::GradCheckCase& c : result.cases) {
    EXPECT_TRUE(c.passed) << c.name << ": " << c.max_relative_error;
  }
  EXPECT_GE(result.cases.size(), 20u);
  EXPECT_LT(result.max_relative_error, 1e-4);
}

TEST(GradCheck, PrimitiveOpSuiteIsSeedStable) {
  const cf::GradCheckSuiteResult a = cf::gradcheck_primitive_ops(7, 1e-5, 1e-4);
  const cf::GradCheckSuiteResult b = cf::gradcheck_primitive_ops(7, 1e-5, 1e-4);
  ASSERT_EQ(a.cases.size(), b.cases.size());
  for (size_t i = 0; i < a.cases.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.cases[i].max_relative_error, b.cases[i].max_relative_error);
  }
}
