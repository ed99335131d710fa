#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace msim {

class Tape;

// Dense row-major array of doubles, rank 1 or 2. An Array may be attached
// to a Tape (tape != nullptr), in which case it refers to a graph node and
// participates in reverse-mode differentiation; detached arrays are plain
// values and the same op functions evaluate them eagerly.
struct Array {
  std::vector<int> shape;
  std::vector<double> data;
  Tape* tape = nullptr;
  int node = -1;

  Array() = default;
  Array(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (size() != data.size())
      throw std::invalid_argument("Array: shape/data size mismatch");
  }

  static Array zeros(std::vector<int> s) {
    size_t n = 1;
    for (int e : s) n *= static_cast<size_t>(e);
    return Array(std::move(s), std::vector<double>(n, 0.0));
  }
  static Array full(std::vector<int> s, double v) {
    Array a = zeros(std::move(s));
    for (double& x : a.data) x = v;
    return a;
  }
  static Array scalar(double v) { return Array({1}, {v}); }

  size_t size() const {
    size_t n = 1;
    for (int e : shape) n *= static_cast<size_t>(e);
    return n;
  }
  int rank() const { return static_cast<int>(shape.size()); }
  // 2-D view: rank-1 arrays count as a single column
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return rank() >= 2 ? shape[1] : 1; }

  bool tracked() const { return tape != nullptr; }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols() + c];
  }
  double item() const {
    if (size() != 1) throw std::invalid_argument("Array::item: not a scalar");
    return data[0];
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace msim
