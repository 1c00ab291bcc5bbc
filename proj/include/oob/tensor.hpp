#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "oob/error.hpp"

namespace oob {

using Scalar = double;

// Dense row-major tensor. Shapes used throughout: images are [3,H,W],
// batches [N,C,H,W], conv weights [Cout,Cin,kh,kw].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), Scalar{0});
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<Scalar> data) {
    Tensor t;
    if (count(shape) != static_cast<long>(data.size()))
      throw Error::argument("Tensor::from: shape/data size mismatch");
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  Scalar operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

  // rank-3 [C,H,W] accessor
  Scalar& at3(int c, int h, int w) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  Scalar at3(int c, int h, int w) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }

  // rank-4 [N,C,H,W] accessor
  Scalar& at4(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  Scalar at4(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(Scalar v) {
    for (auto& x : data_) x = v;
  }

  static long count(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) {
      if (d < 0) throw Error::argument("Tensor: negative dimension");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<int> shape_;
  std::vector<Scalar> data_;
};

inline bool all_finite(const Tensor& t) {
  for (long i = 0; i < t.size(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

inline Scalar max_abs_value(const Tensor& t) {
  Scalar m = 0;
  for (long i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

}  // namespace oob
