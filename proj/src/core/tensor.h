#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "core/error.h"

namespace refbase {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// True if `tail` equals the trailing dimensions of `full` (the only
// broadcasting form the engine allows: everything in front is batch).
inline bool is_trailing_shape(const Shape& tail, const Shape& full) {
  if (tail.size() > full.size()) return false;
  const size_t off = full.size() - tail.size();
  for (size_t i = 0; i < tail.size(); ++i)
    if (tail[i] != full[off + i]) return false;
  return true;
}

// Dense row-major tensor with shared storage. Values are treated as
// immutable once an op has written them; mutable access exists for the
// single-owner phases (initialization, optimizer update, deserialization).
template <typename T>
class Tensor {
 public:
  Tensor() : shape_{}, data_(std::make_shared<std::vector<T>>(1)) {}

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(
            static_cast<size_t>(shape_numel(shape_)))) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(std::move(values))) {
    check_shape();
    if (static_cast<int64_t>(data_->size()) != shape_numel(shape_))
      throw ShapeError("tensor: " + std::to_string(data_->size()) +
                       " values do not fill shape " + shape_str(shape_));
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_->size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

  const T* data() const { return data_->data(); }
  T* mutable_data() { return data_->data(); }
  const std::vector<T>& vec() const { return *data_; }
  std::vector<T>& mutable_vec() { return *data_; }

  T item() const {
    if (size() != 1)
      throw ShapeError("item: tensor " + shape_str(shape_) + " is not scalar");
    return (*data_)[0];
  }

  // Storage identity; used to verify tied tensors share memory.
  const void* storage_id() const { return data_.get(); }

 private:
  void check_shape() const {
    for (int64_t d : shape_)
      if (d <= 0) throw ShapeError("tensor: bad dimension in " + shape_str(shape_));
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

// Integer id tensor for tokens and class targets. Not differentiable.
struct TokenTensor {
  Shape shape;
  std::vector<int32_t> ids;

  TokenTensor() = default;
  TokenTensor(Shape s, std::vector<int32_t> v) : shape(std::move(s)), ids(std::move(v)) {
    if (static_cast<int64_t>(ids.size()) != shape_numel(shape))
      throw ShapeError("token tensor: " + std::to_string(ids.size()) +
                       " ids do not fill shape " + shape_str(shape));
  }

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
};

}  // namespace refbase
