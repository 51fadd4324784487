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

#ifndef TOKMOE_TENSOR_HPP_
#define TOKMOE_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tokmoe {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Rank 1 is a vector, rank 2 a matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return values_[r * cols() + c];
  }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Span-level kernels shared by the tensor operations and the recurrent
// layers. Matrices are row-major with `cols` columns.
namespace kernels {

// out += x^T W, W is x.size() x cols.
void vec_mat_acc(std::span<const double> x, std::span<const double> w,
                 std::size_t cols, std::span<double> out);
// dx += W g, W is dx.size() x g.size().
void mat_vec_acc(std::span<const double> w, std::span<const double> g,
                 std::span<double> dx);
// dw += x g^T.
void outer_acc(std::span<const double> x, std::span<const double> g,
               std::span<double> dw);
double dot(std::span<const double> a, std::span<const double> b);
void softmax_inplace(std::span<double> x);
// dx = y * (dy - <dy, y>) for y = softmax(x).
void softmax_backward(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dx);

}  // namespace kernels

// Matrix product. Both operands must be rank 2 with matching inner dims.
Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrad {
  Tensor a;  // G b^T
  Tensor b;  // a^T G
};
MatmulGrad matmul_backward(const Tensor& a, const Tensor& b,
                           const Tensor& upstream);

// Numerically stable softmax over all values of a vector.
Tensor softmax(const Tensor& x);
Tensor softmax_backward(const Tensor& output, const Tensor& upstream);

Tensor concat(std::span<const Tensor> parts);
std::vector<Tensor> concat_backward(const Tensor& upstream,
                                    std::span<const std::size_t> part_sizes);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Backward passes take the forward output where that is cheaper.
Tensor tanh_backward(const Tensor& output, const Tensor& upstream);
Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream);
struct BinaryGrad {
  Tensor a;
  Tensor b;
};
BinaryGrad add_backward(const Tensor& upstream);
BinaryGrad mul_backward(const Tensor& a, const Tensor& b,
                        const Tensor& upstream);

namespace kernels {
inline double sigmoid(double x) {
  // Split by sign so exp never overflows.
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}
}  // namespace kernels

}  // namespace tokmoe

#endif  // TOKMOE_TENSOR_HPP_
