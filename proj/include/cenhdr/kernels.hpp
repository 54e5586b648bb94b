#pragma once

// Forward and backward kernels on rank-4 tensors. Templates are explicitly
// instantiated for float (storage type) and double (gradient checking).
//
// conv2d, linear and global_avg_pool accumulate in double and round once on
// store.

#include <span>
#include <vector>

#include "cenhdr/tensor.hpp"

namespace cenhdr::kernels {

/// Caps the threads used by the BLAS backend (<= 0 leaves the default).
void set_thread_limit(int threads);

struct Conv2dParams {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
};

/// Validates a convolution and returns its output shape.
/// Throws DimensionError naming the offending axis.
Shape conv2d_output_shape(const Shape& input, const Shape& weight, const Shape* bias, Conv2dParams p);

/// Zero-padded cross-correlation. `bias` may be empty for no bias.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias, Conv2dParams p);

template <typename T>
struct Conv2dGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

/// Only the requested gradients are computed; the others stay empty.
template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out, Conv2dParams p,
                               bool need_input, bool need_weight, bool need_bias);

template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& input, int r);

template <typename T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& input, int r);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, const Shape& input_shape);

/// input (n, c_in, 1, 1), weight (c_out, c_in, 1, 1), bias (1, c_out, 1, 1) or empty.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
struct LinearGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out);

enum class Activation { relu, sigmoid };

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation kind);

/// `output` is the forward result (sigmoid's derivative is taken from it).
template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& input, const BasicTensor<T>& output, const BasicTensor<T>& grad_out, Activation kind);

enum class Binary { add, mul };

/// `b` must match `a` exactly, or be (n,1,h,w) or (n,c,1,1) against a (n,c,h,w).
template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, Binary kind);

template <typename T>
struct BinaryGrads {
    BasicTensor<T> a;
    BasicTensor<T> b;
};

template <typename T>
BinaryGrads<T> elementwise_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& grad_out, Binary kind);

/// Replicates a (n,1,h,w) map across c channels or a (n,c,1,1) vector across h x w.
template <typename T>
BasicTensor<T> expand(const BasicTensor<T>& input, const Shape& target);

/// Sums a gradient of the expanded shape back onto the source shape.
template <typename T>
BasicTensor<T> expand_backward(const BasicTensor<T>& grad_out, const Shape& source);

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> tensors);

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& input, std::span<const std::int64_t> channels);

/// Mean absolute difference over all elements.
template <typename T>
T l1_loss(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// d l1 / d a, scaled by `grad_out`. sign(0) is 0.
template <typename T>
BasicTensor<T> l1_loss_backward(const BasicTensor<T>& a, const BasicTensor<T>& b, T grad_out);

/// log(1 + mu x) / log(1 + mu), elementwise.
template <typename T>
BasicTensor<T> mu_law(const BasicTensor<T>& input, double mu);

template <typename T>
BasicTensor<T> mu_law_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out, double mu);

template <typename T>
T mean(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, double factor);

}  // namespace cenhdr::kernels
