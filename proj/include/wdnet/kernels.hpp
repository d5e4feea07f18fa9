#pragma once

// Raw compute kernels behind the differentiable operations.
//
// Every kernel exists twice: the OpenMP version in `wdnet::kernels` used by
// the engine, and a plain serial version in `wdnet::kernels::reference`
// kept as the test oracle and benchmark baseline. Parallel kernels split work
// so that each output element is produced by exactly one thread in a fixed
// order; results do not depend on the thread count.

#include <array>
#include <cstddef>

namespace wdnet::kernels {

struct ConvGeometry {
    int batch = 1;
    int in_ch = 1;
    int in_h = 1;
    int in_w = 1;
    int out_ch = 1;
    int k_h = 3;
    int k_w = 3;
    int stride = 1;
    int dilation = 1;
    int pad = 0;

    int out_h() const { return (in_h + 2 * pad - dilation * (k_h - 1) - 1) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - dilation * (k_w - 1) - 1) / stride + 1; }
};

/// out = conv(in, w) + b. Layouts: in B×IC×H×W, w OC×IC×KH×KW, b OC (nullable),
/// out B×OC×OH×OW.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* b, T* out);

/// Accumulates (+=) into whichever of grad_in / grad_w / grad_b is non-null.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* in, const T* w, const T* grad_out,
                     T* grad_in, T* grad_w, T* grad_b);

/// h[n,c,i,j] = relu(x[n,c,i,j] + w[c] * h[n,c,i-dy,j-dx]), zero outside.
template <typename T>
void sweep_forward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                   const T* w, T* h);

/// Accumulates into grad_x (B×C×H×W) and grad_w (C); either may be null.
template <typename T>
void sweep_backward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                    const T* w, const T* h, const T* grad_h, T* grad_x, T* grad_w);

/// Orthonormal Haar packet split of `planes` independent H×W planes. Each
/// plane yields 4^level bands of (H>>level)×(W>>level), stored contiguously in
/// depth-first packet order (LL, HL, LH, HH at every node).
template <typename T>
void haar_packet_forward(int planes, int height, int width, int level, const T* in, T* out);

/// Exact inverse (and adjoint) of haar_packet_forward.
template <typename T>
void haar_packet_inverse(int planes, int height, int width, int level, const T* in, T* out);

namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* in, const T* w, const T* b, T* out);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* in, const T* w, const T* grad_out,
                     T* grad_in, T* grad_w, T* grad_b);

template <typename T>
void sweep_forward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                   const T* w, T* h);

template <typename T>
void sweep_backward(int batch, int channels, int height, int width, int dy, int dx, const T* x,
                    const T* w, const T* h, const T* grad_h, T* grad_x, T* grad_w);

template <typename T>
void haar_packet_forward(int planes, int height, int width, int level, const T* in, T* out);

template <typename T>
void haar_packet_inverse(int planes, int height, int width, int level, const T* in, T* out);

}  // namespace reference

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();
void set_threads(int n);

}  // namespace wdnet::kernels
