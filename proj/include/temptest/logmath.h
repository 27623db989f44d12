// Copyright 2026 The TempTest Authors.
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

#ifndef TEMPTEST_LOGMATH_H_
#define TEMPTEST_LOGMATH_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace temptest {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_i exp(x_i)), fixed left-to-right summation order. Returns -inf for
// an empty span or when every entry is -inf.
inline double LogSumExp(std::span<const double> x) {
  double max = kNegInf;
  for (double v : x) max = std::max(max, v);
  if (max == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - max);
  return max + std::log(sum);
}

// log(sum_i exp(x_i / tau)).
inline double ScaledLogSumExp(std::span<const double> x, double inv_tau) {
  double max = kNegInf;
  for (double v : x) max = std::max(max, v * inv_tau);
  if (max == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : x) sum += std::exp(v * inv_tau - max);
  return max + std::log(sum);
}

// log(exp(a) + exp(b)).
inline double LogAddExp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// 1 / (1 + exp(-x)) without overflow for large |x|.
inline double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace temptest

#endif  // TEMPTEST_LOGMATH_H_
