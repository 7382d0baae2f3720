#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "arnn/tensor.hpp"

// Differentiable tensor operations. Every function records a graph node when
// any operand requires grad. Shape violations throw ShapeError.
namespace arnn::ops {

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor neg(const Tensor& x);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
// before/after zero padding per axis; pads.size() must equal rank.
Tensor pad_zeros(const Tensor& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads);

// Output element k copies x[source[k]], or is zero when source[k] < 0.
Tensor gather(const Tensor& x, Shape shape, std::vector<std::ptrdiff_t> source);

Tensor sum(const Tensor& x);
// Sums over the listed axes and drops them.
Tensor sum(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);

// input [c_in x H x W], kernel [c_out x c_in x kh x kw], zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride = 1,
              std::size_t padding = 0);
// input [c_in x H x W], kernel [c_in x c_out x kh x kw]; adjoint of conv2d
// with the same kernel, stride and zero padding.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, std::size_t stride = 1);
// Adds bias[c] to every spatial position of x[c x ...].
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// Non-overlapping window max over [c x H x W]; trailing partial windows are dropped.
Tensor max_pool2d(const Tensor& x, std::size_t window);

// Softmax over all elements of x (an m x n map sums to one).
Tensor softmax_spatial(const Tensor& x);
// Scalar -log softmax(logits)[label] for a rank-1 logits vector.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label);

}  // namespace arnn::ops
