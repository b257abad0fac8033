#include "tcu/tensor.hpp"

namespace tcu {

std::int64_t TensorShape::elements() const {
  std::int64_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::int64_t TensorShape::positions() const {
  std::int64_t n = 1;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) n *= dims_[i];
  return n;
}

bool TensorShape::valid() const {
  if (dims_.empty() || dims_.size() > 3) return false;
  for (auto d : dims_) {
    if (d < 1) return false;
  }
  return true;
}

std::string TensorShape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

}  // namespace tcu
