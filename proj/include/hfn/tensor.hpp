#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hfn/common.hpp"

namespace hfn {

// Dense row-major n-d array. Activations are NCHW, conv weights OIHW.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(checked_numel(shape), T(0)) {}
  Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(checked_numel(shape), fill) {}
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != checked_numel(shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str());
    }
  }

  static int64_t checked_numel(const std::vector<int>& s) {
    if (s.empty()) throw std::invalid_argument("tensor shape must not be empty");
    int64_t n = 1;
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(size_t i) const { return shape.at(i); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  T& at4(int n, int c, int h, int w) {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }
};

using TensorF = Tensor<float>;

template <typename T>
uint64_t tensor_checksum(const Tensor<T>& t) {
  return fnv1a64(t.data.data(), t.data.size() * sizeof(T));
}

template <typename T>
void require_dims(const Tensor<T>& t, size_t nd, const char* what) {
  if (t.shape.size() != nd) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(nd) +
                                "-d tensor, got " + t.shape_str());
  }
}

}  // namespace hfn
