#pragma once

// ---------------------------------------------------------------------------
// Compute kernels for dense and convolution layers.
//
// The functions in `kernels` are OpenMP-parallel. Every output element is
// owned by exactly one thread and accumulated in a fixed order, so results
// do not depend on the thread count. `kernels::reference` holds plain serial
// loops used as test oracles and as the benchmark baseline.
//
// Layouts: activations are row-major batch x features or NCHW, dense
// weights are out x in, conv weights are out_ch x in_ch x kh x kw.
// Backward kernels overwrite their outputs.
// ---------------------------------------------------------------------------

#include <cstddef>

namespace reglearn::kernels {

struct ConvShape {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t pad = 0;

    std::size_t out_height() const { return height + 2 * pad - kernel_h + 1; }
    std::size_t out_width() const { return width + 2 * pad - kernel_w + 1; }
};

void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const double* x, const double* w,
                   const double* b, double* y);
void dense_backward_weights(std::size_t batch, std::size_t in, std::size_t out, const double* x,
                            const double* dy, double* dw, double* db);
void dense_backward_input(std::size_t batch, std::size_t in, std::size_t out, const double* w,
                          const double* dy, double* dx);

void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y);
void conv2d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db);
void conv2d_backward_input(const ConvShape& s, const double* w, const double* dy, double* dx);

namespace reference {

void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const double* x, const double* w,
                   const double* b, double* y);
void dense_backward_weights(std::size_t batch, std::size_t in, std::size_t out, const double* x,
                            const double* dy, double* dw, double* db);
void dense_backward_input(std::size_t batch, std::size_t in, std::size_t out, const double* w,
                          const double* dy, double* dx);

void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y);
void conv2d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db);
void conv2d_backward_input(const ConvShape& s, const double* w, const double* dy, double* dx);

}  // namespace reference

}  // namespace reglearn::kernels
