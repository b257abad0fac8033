#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tcu {

/// Row-major dims. Layouts: [features], [len, channels], [h, w, channels].
class TensorShape {
 public:
  TensorShape() = default;
  TensorShape(std::initializer_list<std::int64_t> dims) : dims_(dims) {}
  explicit TensorShape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {}

  const std::vector<std::int64_t>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  std::int64_t operator[](int i) const { return dims_[static_cast<std::size_t>(i)]; }
  std::int64_t elements() const;

  /// Trailing dim (channels / features).
  std::int64_t channels() const { return dims_.back(); }
  /// Product of all dims but the last: spatial positions (1 for vectors).
  std::int64_t positions() const;

  bool valid() const;
  std::string str() const;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;

 private:
  std::vector<std::int64_t> dims_;
};

/// Dense tensor: a shape plus flat row-major storage.
template <typename Scalar>
struct Tensor {
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TensorShape shape;
  Storage data;

  Tensor() = default;
  explicit Tensor(TensorShape s)
      : shape(std::move(s)), data(Storage::Zero(shape.elements())) {}
  Tensor(TensorShape s, Storage d) : shape(std::move(s)), data(std::move(d)) {}

  Scalar& operator[](std::int64_t i) { return data[i]; }
  const Scalar& operator[](std::int64_t i) const { return data[i]; }
  std::int64_t size() const { return data.size(); }
};

using TensorF = Tensor<double>;

}  // namespace tcu
