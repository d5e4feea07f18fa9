#pragma once

// Differentiable operations on TensorT. Image tensors use B×C×H×W layout.

#include <array>
#include <string_view>
#include <vector>

#include "wdnet/tensor.hpp"

namespace wdnet {

struct Conv2dOptions {
    int stride = 1;
    int dilation = 1;
    int padding = 0;
};

/// Cross-correlation with dilated taps and zero padding. `bias` may be an
/// undefined tensor.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, const TensorT<T>& bias,
                  Conv2dOptions options = {});

// Binary ops accept equal shapes, or two rank-4 tensors where one side has a
// single channel and is broadcast over the other's channels.
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T factor);
template <typename T>
TensorT<T> relu(const TensorT<T>& a);
/// Logistic function, clamped to the open interval (0, 1) at T's precision.
template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a);

template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& parts);
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, int begin, int count);
/// out channel i = x channel order[i].
template <typename T>
TensorT<T> gather_channels(const TensorT<T>& x, const std::vector<int>& order);

/// Same values under a new shape with equal element count.
template <typename T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape);

/// Mean over non-overlapping factor×factor blocks.
template <typename T>
TensorT<T> downsample_avg(const TensorT<T>& x, int factor);

template <typename T>
TensorT<T> sum(const TensorT<T>& x);
template <typename T>
TensorT<T> mean(const TensorT<T>& x);

/// Unit grid step of a recurrent sweep; the hidden state at (i, j) reads the
/// state at (i - dy, j - dx).
struct Step {
    int dy = 0;
    int dx = 0;
    bool operator==(const Step&) const = default;
};

enum class Direction { East, West, South, North, SouthEast, SouthWest, NorthEast, NorthWest };

Step step_of(Direction d);
std::string_view name_of(Direction d);
/// The four axis directions, or those plus the four diagonals.
std::vector<Direction> compass(int count);

/// IRNN-style recurrence h = relu(x + w_c * h_prev) swept along `step`.
/// `weight` holds one scalar per channel.
template <typename T>
TensorT<T> directional_sweep(const TensorT<T>& x, Step step, const TensorT<T>& weight);

}  // namespace wdnet
