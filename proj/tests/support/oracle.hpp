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

#ifndef TOKMOE_TESTS_ORACLE_HPP_
#define TOKMOE_TESTS_ORACLE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace tokmoe::testing {

inline constexpr double kFdEpsilon = 1e-5;

// Central difference of f with respect to x[i]; x is restored.
inline double central_difference(const std::function<double()>& f, double& x,
                                 double eps = kFdEpsilon) {
  const double saved = x;
  x = saved + eps;
  const double plus = f();
  x = saved - eps;
  const double minus = f();
  x = saved;
  return (plus - minus) / (2.0 * eps);
}

// |a - n| / max(|a|, |n|, floor).
inline double rel_err(double a, double n, double floor = 1e-8) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed,
                                         double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(n);
  for (double& v : out) v = dist(gen);
  return out;
}

// Max relative error between analytic gradients and central differences of
// f over every coordinate of x.
inline double max_fd_error(const std::function<double()>& f, std::span<double> x,
                           std::span<const double> analytic, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, rel_err(analytic[i], central_difference(f, x[i]), floor));
  }
  return worst;
}

}  // namespace tokmoe::testing

#endif  // TOKMOE_TESTS_ORACLE_HPP_
