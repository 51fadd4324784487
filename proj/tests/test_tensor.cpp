// Copyright 2026 The TokenMoE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "support/oracle.hpp"
#include "tokmoe/error.hpp"
#include "tokmoe/params.hpp"
#include "tokmoe/tensor.hpp"

namespace tokmoe {
namespace {

using testing::max_fd_error;
using testing::random_values;

double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
  return s;
}

TEST(Tensor, RejectsZeroDimensionsAndSizeMismatch) {
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
  EXPECT_THROW(Tensor(Shape{2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  Tensor t(Shape{2, 3});
  EXPECT_EQ(t.size(), 6u);
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, m), m);
}

TEST(Matmul, RowTimesColumn) {
  const Tensor out = matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
  ASSERT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_EQ(out[0], 11.0);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 2, {3, 4}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    const auto first = msg.find("[1x2]");
    ASSERT_NE(first, std::string::npos) << msg;
    EXPECT_NE(msg.find("[1x2]", first + 1), std::string::npos) << msg;
    EXPECT_EQ(e.code(), "E_DIM");
  }
}

TEST(Matmul, BackwardMatchesFiniteDifferences) {
  Tensor a = Tensor::matrix(3, 4, random_values(12, 1));
  Tensor b = Tensor::matrix(4, 2, random_values(8, 2));
  const Tensor g = Tensor::matrix(3, 2, random_values(6, 3));
  const MatmulGrad grad = matmul_backward(a, b, g);
  auto loss = [&] { return weighted_sum(matmul(a, b), g); };
  EXPECT_LT(max_fd_error(loss, a.values(), grad.a.values()), 1e-6);
  EXPECT_LT(max_fd_error(loss, b.values(), grad.b.values()), 1e-6);
}

TEST(Matmul, AssociativeOnRandomChains) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor a = Tensor::matrix(3, 4, random_values(12, seed * 3 + 1));
    const Tensor b = Tensor::matrix(4, 5, random_values(20, seed * 3 + 2));
    const Tensor c = Tensor::matrix(5, 2, random_values(10, seed * 3 + 3));
    const Tensor left = matmul(matmul(a, b), c);
    const Tensor right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      EXPECT_LE(std::abs(left[i] - right[i]),
                1e-9 * std::max(1.0, std::abs(right[i])));
    }
  }
}

TEST(Softmax, EqualLogitsAreUniform) {
  const Tensor y = softmax(Tensor::vector({0, 0, 0}));
  for (double v : y.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogTwoAgainstZero) {
  const Tensor y = softmax(Tensor::vector({std::log(2.0), 0.0}));
  EXPECT_NEAR(y[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(y[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  const auto x = random_values(7, 11, -3, 3);
  const Tensor base = softmax(Tensor::vector(x));
  for (double c : {-100.0, 0.5, 250.0}) {
    std::vector<double> shifted = x;
    for (double& v : shifted) v += c;
    const Tensor y = softmax(Tensor::vector(shifted));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], base[i], 1e-12);
  }
}

TEST(Softmax, StaysOnSimplexForExtremeLogits) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Tensor y = softmax(Tensor::vector(random_values(9, seed, -800, 800)));
    double sum = 0.0;
    for (double v : y.values()) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_TRUE(y.all_finite());
  }
}

TEST(Softmax, EmptyInputIsDomainError) {
  std::vector<double> empty;
  EXPECT_THROW(kernels::softmax_inplace(empty), DomainError);
}

TEST(Softmax, BackwardMatchesFiniteDifferences) {
  Tensor x = Tensor::vector(random_values(5, 4, -2, 2));
  const Tensor g = Tensor::vector(random_values(5, 5));
  const Tensor dx = softmax_backward(softmax(x), g);
  auto loss = [&] { return weighted_sum(softmax(x), g); };
  EXPECT_LT(max_fd_error(loss, x.values(), dx.values()), 1e-6);
}

TEST(Concat, SinglePartIsIdentity) {
  const std::vector<Tensor> parts = {Tensor::vector({1, 2})};
  EXPECT_EQ(concat(parts), Tensor::vector({1, 2}));
}

TEST(Concat, PreservesOrderAndLength) {
  const std::vector<Tensor> parts = {Tensor::vector({1}), Tensor::vector({2, 3})};
  EXPECT_EQ(concat(parts), Tensor::vector({1, 2, 3}));
  const std::vector<Tensor> many = {Tensor::vector(random_values(3, 1)),
                                    Tensor::vector(random_values(4, 2)),
                                    Tensor::vector(random_values(2, 3))};
  EXPECT_EQ(concat(many).size(), 9u);
}

TEST(Concat, EmptyInputIsRejected) {
  const std::vector<Tensor> none;
  EXPECT_THROW(concat(none), Error);
}

TEST(Concat, BackwardSplitsByOffsets) {
  const Tensor up = Tensor::vector({1, 2, 3, 4, 5});
  const std::vector<std::size_t> sizes = {2, 3};
  const auto parts = concat_backward(up, sizes);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0], Tensor::vector({1, 2}));
  EXPECT_EQ(parts[1], Tensor::vector({3, 4, 5}));
}

TEST(Elementwise, PointValues) {
  EXPECT_EQ(tanh(Tensor::vector({0}))[0], 0.0);
  EXPECT_EQ(sigmoid(Tensor::vector({0}))[0], 0.5);
  EXPECT_EQ(add(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({4, 6}));
  EXPECT_EQ(mul(Tensor::vector({1, 2}), Tensor::vector({3, 4})), Tensor::vector({3, 8}));
}

TEST(Elementwise, BinaryShapeMismatch) {
  EXPECT_THROW(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), DimensionError);
  EXPECT_THROW(mul(Tensor::vector({1, 2}), Tensor::vector({1})), DimensionError);
}

TEST(Elementwise, SigmoidIsStableForLargeInputs) {
  const Tensor y = sigmoid(Tensor::vector({-1000, 1000}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 1.0);
}

TEST(Elementwise, BackwardMatchesFiniteDifferences) {
  Tensor x = Tensor::vector(random_values(6, 21, -2, 2));
  Tensor y = Tensor::vector(random_values(6, 22, -2, 2));
  const Tensor g = Tensor::vector(random_values(6, 23));

  const Tensor dt = tanh_backward(tanh(x), g);
  EXPECT_LT(max_fd_error([&] { return weighted_sum(tanh(x), g); }, x.values(), dt.values()),
            1e-6);
  const Tensor ds = sigmoid_backward(sigmoid(x), g);
  EXPECT_LT(
      max_fd_error([&] { return weighted_sum(sigmoid(x), g); }, x.values(), ds.values()),
      1e-6);
  const BinaryGrad dm = mul_backward(x, y, g);
  auto mul_loss = [&] { return weighted_sum(mul(x, y), g); };
  EXPECT_LT(max_fd_error(mul_loss, x.values(), dm.a.values()), 1e-6);
  EXPECT_LT(max_fd_error(mul_loss, y.values(), dm.b.values()), 1e-6);
  const BinaryGrad da = add_backward(g);
  auto add_loss = [&] { return weighted_sum(add(x, y), g); };
  EXPECT_LT(max_fd_error(add_loss, x.values(), da.a.values()), 1e-6);
  EXPECT_LT(max_fd_error(add_loss, y.values(), da.b.values()), 1e-6);
}

TEST(ParamStore, SlotsHaveZeroGradOfSameShape) {
  ParamStore store;
  const SlotId id = store.add("expert.1.attn.W", {4, 3});
  EXPECT_EQ(store.value(id).shape(), store.grad(id).shape());
  for (double g : store.grad(id).values()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(store.at("expert.1.attn.W"), id);
  EXPECT_EQ(store.scalar_count(), 12u);
}

TEST(ParamStore, DuplicateAndMissingNames) {
  ParamStore store;
  store.add("a", {2});
  EXPECT_THROW(store.add("a", {3}), ConfigError);
  EXPECT_THROW(store.at("b"), IndexError);
  EXPECT_FALSE(store.find("b").has_value());
}

}  // namespace
}  // namespace tokmoe
