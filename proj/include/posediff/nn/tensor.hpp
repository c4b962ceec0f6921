#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "posediff/errors.hpp"
#include "posediff/tensor_blob.hpp"

namespace posediff::nn {

// Dense row-major array with shared-buffer copy semantics (copies alias the
// same storage; clone() deep-copies). Templated on the scalar so the whole
// model stack can run in double for finite-difference checks.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)),
          buf_(std::make_shared<std::vector<T>>(static_cast<size_t>(count(shape_)), T(0))) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor scalar(T v) {
        Tensor t({1});
        t.data()[0] = v;
        return t;
    }

    bool defined() const { return buf_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }

    int64_t numel() const { return count(shape_); }

    T* data() { return buf_->data(); }
    const T* data() const { return buf_->data(); }

    T& operator[](int64_t i) { return (*buf_)[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return (*buf_)[static_cast<size_t>(i)]; }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = std::make_shared<std::vector<T>>(*buf_);
        return t;
    }

    void fill(T v) { std::fill(buf_->begin(), buf_->end(), v); }

    // Same storage, new shape with identical element count.
    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != numel()) fail(ErrorCode::ShapeMismatch, "reshape changes element count");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = shape.empty() ? 0 : 1;
        for (int d : shape) n *= d;
        return n;
    }

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<T>> buf_;
};

template <typename T>
Tensor<T> from_blob(const TensorBlob& b) {
    std::vector<int> shape(b.shape.begin(), b.shape.end());
    Tensor<T> t(shape);
    for (int64_t i = 0; i < t.numel(); i++) t[i] = static_cast<T>(b.f32[static_cast<size_t>(i)]);
    return t;
}

template <typename T>
TensorBlob to_blob(const Tensor<T>& t) {
    TensorBlob b = TensorBlob::zeros(std::vector<int64_t>(t.shape().begin(), t.shape().end()));
    for (int64_t i = 0; i < t.numel(); i++) b.f32[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    return b;
}

}  // namespace posediff::nn
