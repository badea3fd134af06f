// Copyright 2026 The ttts Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace ttts {

/// Dense row-major matrix. Column vectors are (n x 1).
template <class S>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<S> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, S(0)) {}

  static Mat zeros(int r, int c) { return Mat(r, c); }

  S* data() { return v.data(); }
  const S* data() const { return v.data(); }
  std::size_t size() const { return v.size(); }

  S& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  const S& operator()(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }

  void fill(S x) {
    for (auto& e : v) e = x;
  }

  bool all_finite() const {
    for (S e : v)
      if (!std::isfinite(static_cast<double>(e))) return false;
    return true;
  }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
  }
};

using MatF = Mat<float>;

}  // namespace ttts
