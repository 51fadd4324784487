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

#include "tokmoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "tokmoe/error.hpp"

namespace tokmoe {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("zero-sized dimension in " + shape_string(shape_));
  }
  values_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw DimensionError("zero-sized dimension in " + shape_string(shape_));
  }
  if (element_count(shape_) != values_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " +
                         std::to_string(element_count(shape_)) +
                         " values, got " + std::to_string(values_.size()));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  return rank() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const {
  return rank() == 0 ? 0 : shape_.back();
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

namespace kernels {

void vec_mat_acc(std::span<const double> x, std::span<const double> w,
                 std::size_t cols, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += xi * row[j];
  }
}

void mat_vec_acc(std::span<const double> w, std::span<const double> g,
                 std::span<double> dx) {
  const std::size_t cols = g.size();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double* row = w.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * g[j];
    dx[i] += acc;
  }
}

void outer_acc(std::span<const double> x, std::span<const double> g,
               std::span<double> dw) {
  const std::size_t cols = g.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* row = dw.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += xi * g[j];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void softmax_inplace(std::span<double> x) {
  if (x.empty()) throw DomainError("softmax of an empty vector");
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

void softmax_backward(std::span<const double> y, std::span<const double> dy,
                      std::span<double> dx) {
  const double inner = dot(dy, y);
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - inner);
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) +
                         " by " + shape_string(b.shape()));
  }
  Tensor out(Shape{a.rows(), b.cols()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    kernels::vec_mat_acc(a.values().subspan(r * a.cols(), a.cols()),
                         b.values(), b.cols(),
                         out.values().subspan(r * b.cols(), b.cols()));
  }
  return out;
}

MatmulGrad matmul_backward(const Tensor& a, const Tensor& b,
                           const Tensor& upstream) {
  if (upstream.rank() != 2 || upstream.rows() != a.rows() ||
      upstream.cols() != b.cols()) {
    throw DimensionError("matmul_backward: upstream " +
                         shape_string(upstream.shape()) + " does not match " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  MatmulGrad g{Tensor::zeros_like(a), Tensor::zeros_like(b)};
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto g_row = upstream.values().subspan(r * b.cols(), b.cols());
    kernels::mat_vec_acc(b.values(), g_row,
                         g.a.values().subspan(r * a.cols(), a.cols()));
    kernels::outer_acc(a.values().subspan(r * a.cols(), a.cols()), g_row,
                       g.b.values());
  }
  return g;
}

Tensor softmax(const Tensor& x) {
  if (x.size() == 0) throw DomainError("softmax of an empty vector");
  Tensor y = x;
  kernels::softmax_inplace(y.values());
  return y;
}

Tensor softmax_backward(const Tensor& output, const Tensor& upstream) {
  require_same_shape(output, upstream, "softmax_backward");
  Tensor dx = Tensor::zeros_like(output);
  kernels::softmax_backward(output.values(), upstream.values(), dx.values());
  return dx;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DomainError("concat of zero parts");
  std::vector<double> values;
  for (const Tensor& p : parts) {
    values.insert(values.end(), p.values().begin(), p.values().end());
  }
  return Tensor::vector(std::move(values));
}

std::vector<Tensor> concat_backward(const Tensor& upstream,
                                    std::span<const std::size_t> part_sizes) {
  const std::size_t total =
      std::accumulate(part_sizes.begin(), part_sizes.end(), std::size_t{0});
  if (total != upstream.size()) {
    throw DimensionError("concat_backward: parts sum to " +
                         std::to_string(total) + " but upstream has " +
                         std::to_string(upstream.size()));
  }
  std::vector<Tensor> out;
  out.reserve(part_sizes.size());
  std::size_t offset = 0;
  for (std::size_t n : part_sizes) {
    auto piece = upstream.values().subspan(offset, n);
    out.push_back(Tensor::vector({piece.begin(), piece.end()}));
    offset += n;
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = std::tanh(v);
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = kernels::sigmoid(v);
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b[i];
  return y;
}

Tensor tanh_backward(const Tensor& output, const Tensor& upstream) {
  require_same_shape(output, upstream, "tanh_backward");
  Tensor dx = upstream;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    dx[i] *= 1.0 - output[i] * output[i];
  }
  return dx;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream) {
  require_same_shape(output, upstream, "sigmoid_backward");
  Tensor dx = upstream;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    dx[i] *= output[i] * (1.0 - output[i]);
  }
  return dx;
}

BinaryGrad add_backward(const Tensor& upstream) {
  return {upstream, upstream};
}

BinaryGrad mul_backward(const Tensor& a, const Tensor& b,
                        const Tensor& upstream) {
  require_same_shape(a, b, "mul_backward");
  require_same_shape(a, upstream, "mul_backward");
  return {mul(upstream, b), mul(upstream, a)};
}

}  // namespace tokmoe
