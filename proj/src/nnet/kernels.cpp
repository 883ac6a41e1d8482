#include "reglearn/nnet/kernels.hpp"

#include <algorithm>
#include <cstring>

namespace reglearn::kernels {

namespace {

// Output columns ox for which ox + kj - pad lands inside [0, width).
struct Span1 {
    std::size_t begin, end;
};

Span1 valid_range(std::size_t k, std::size_t pad, std::size_t in_len, std::size_t out_len) {
    // need 0 <= o + k - pad < in_len
    const std::size_t begin = pad > k ? pad - k : 0;
    const std::size_t limit = in_len + pad > k ? in_len + pad - k : 0;
    return {std::min(begin, out_len), std::min(limit, out_len)};
}

}  // namespace

// ---- dense ------------------------------------------------------------------

void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const double* x, const double* w,
                   const double* b, double* y) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(batch); ++n) {
        const double* xn = x + n * in;
        double* yn = y + n * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = w + o * in;
            double acc = b ? b[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xn[i];
            yn[o] = acc;
        }
    }
}

void dense_backward_weights(std::size_t batch, std::size_t in, std::size_t out, const double* x,
                            const double* dy, double* dw, double* db) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(out); ++o) {
        double* dwo = dw + o * in;
        std::fill(dwo, dwo + in, 0.0);
        double bsum = 0.0;
        for (std::size_t n = 0; n < batch; ++n) {
            const double g = dy[n * out + o];
            bsum += g;
            const double* xn = x + n * in;
            for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xn[i];
        }
        if (db) db[o] = bsum;
    }
}

void dense_backward_input(std::size_t batch, std::size_t in, std::size_t out, const double* w,
                          const double* dy, double* dx) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(batch); ++n) {
        double* dxn = dx + n * in;
        std::fill(dxn, dxn + in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double g = dy[n * out + o];
            const double* wo = w + o * in;
            for (std::size_t i = 0; i < in; ++i) dxn[i] += g * wo[i];
        }
    }
}

// ---- conv2d -----------------------------------------------------------------

void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y) {
    const std::size_t oh = s.out_height(), ow = s.out_width();
    const std::size_t in_plane = s.height * s.width, out_plane = oh * ow;
    const std::size_t jobs = s.batch * s.out_channels;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(jobs); ++job) {
        const std::size_t n = job / s.out_channels, oc = job % s.out_channels;
        double* yp = y + (n * s.out_channels + oc) * out_plane;
        std::fill(yp, yp + out_plane, b ? b[oc] : 0.0);
        for (std::size_t c = 0; c < s.in_channels; ++c) {
            const double* xp = x + (n * s.in_channels + c) * in_plane;
            const double* wk = w + ((oc * s.in_channels + c) * s.kernel_h) * s.kernel_w;
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
                const Span1 rows = valid_range(ki, s.pad, s.height, oh);
                for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                    const Span1 cols = valid_range(kj, s.pad, s.width, ow);
                    const double wv = wk[ki * s.kernel_w + kj];
                    for (std::size_t oy = rows.begin; oy < rows.end; ++oy) {
                        const double* xr = xp + (oy + ki - s.pad) * s.width;
                        double* yr = yp + oy * ow;
                        for (std::size_t ox = cols.begin; ox < cols.end; ++ox) yr[ox] += wv * xr[ox + kj - s.pad];
                    }
                }
            }
        }
    }
}

void conv2d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db) {
    const std::size_t oh = s.out_height(), ow = s.out_width();
    const std::size_t in_plane = s.height * s.width, out_plane = oh * ow;
    const std::size_t ksize = s.in_channels * s.kernel_h * s.kernel_w;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(s.out_channels); ++oc) {
        double* dwo = dw + oc * ksize;
        std::fill(dwo, dwo + ksize, 0.0);
        double bsum = 0.0;
        for (std::size_t n = 0; n < s.batch; ++n) {
            const double* gp = dy + (n * s.out_channels + oc) * out_plane;
            for (std::size_t i = 0; i < out_plane; ++i) bsum += gp[i];
            for (std::size_t c = 0; c < s.in_channels; ++c) {
                const double* xp = x + (n * s.in_channels + c) * in_plane;
                for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
                    const Span1 rows = valid_range(ki, s.pad, s.height, oh);
                    for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                        const Span1 cols = valid_range(kj, s.pad, s.width, ow);
                        double acc = 0.0;
                        for (std::size_t oy = rows.begin; oy < rows.end; ++oy) {
                            const double* xr = xp + (oy + ki - s.pad) * s.width;
                            const double* gr = gp + oy * ow;
                            for (std::size_t ox = cols.begin; ox < cols.end; ++ox) acc += gr[ox] * xr[ox + kj - s.pad];
                        }
                        dwo[(c * s.kernel_h + ki) * s.kernel_w + kj] += acc;
                    }
                }
            }
        }
        if (db) db[oc] = bsum;
    }
}

void conv2d_backward_input(const ConvShape& s, const double* w, const double* dy, double* dx) {
    const std::size_t oh = s.out_height(), ow = s.out_width();
    const std::size_t in_plane = s.height * s.width, out_plane = oh * ow;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(s.batch); ++n) {
        double* dxn = dx + n * s.in_channels * in_plane;
        std::fill(dxn, dxn + s.in_channels * in_plane, 0.0);
        for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
            const double* gp = dy + (n * s.out_channels + oc) * out_plane;
            for (std::size_t c = 0; c < s.in_channels; ++c) {
                double* dxp = dxn + c * in_plane;
                const double* wk = w + ((oc * s.in_channels + c) * s.kernel_h) * s.kernel_w;
                for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
                    const Span1 rows = valid_range(ki, s.pad, s.height, oh);
                    for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                        const Span1 cols = valid_range(kj, s.pad, s.width, ow);
                        const double wv = wk[ki * s.kernel_w + kj];
                        for (std::size_t oy = rows.begin; oy < rows.end; ++oy) {
                            double* dr = dxp + (oy + ki - s.pad) * s.width;
                            const double* gr = gp + oy * ow;
                            for (std::size_t ox = cols.begin; ox < cols.end; ++ox) dr[ox + kj - s.pad] += wv * gr[ox];
                        }
                    }
                }
            }
        }
    }
}

// ---- serial reference ---------------------------------------------------------

namespace reference {

void dense_forward(std::size_t batch, std::size_t in, std::size_t out, const double* x, const double* w,
                   const double* b, double* y) {
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b ? b[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[n * in + i];
            y[n * out + o] = acc;
        }
}

void dense_backward_weights(std::size_t batch, std::size_t in, std::size_t out, const double* x,
                            const double* dy, double* dw, double* db) {
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t n = 0; n < batch; ++n) acc += dy[n * out + o] * x[n * in + i];
            dw[o * in + i] = acc;
        }
        if (db) {
            double acc = 0.0;
            for (std::size_t n = 0; n < batch; ++n) acc += dy[n * out + o];
            db[o] = acc;
        }
    }
}

void dense_backward_input(std::size_t batch, std::size_t in, std::size_t out, const double* w,
                          const double* dy, double* dx) {
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += dy[n * out + o] * w[o * in + i];
            dx[n * in + i] = acc;
        }
}

namespace {

double x_at(const ConvShape& s, const double* x, std::size_t n, std::size_t c, std::ptrdiff_t iy,
            std::ptrdiff_t ix) {
    if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(s.height) ||
        ix >= static_cast<std::ptrdiff_t>(s.width))
        return 0.0;
    return x[((n * s.in_channels + c) * s.height + iy) * s.width + ix];
}

}  // namespace

void conv2d_forward(const ConvShape& s, const double* x, const double* w, const double* b, double* y) {
    const std::size_t oh = s.out_height(), ow = s.out_width();
    const auto pad = static_cast<std::ptrdiff_t>(s.pad);
    for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t oc = 0; oc < s.out_channels; ++oc)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = b ? b[oc] : 0.0;
                    for (std::size_t c = 0; c < s.in_channels; ++c)
                        for (std::size_t ki = 0; ki < s.kernel_h; ++ki)
                            for (std::size_t kj = 0; kj < s.kernel_w; ++kj)
                                acc += w[((oc * s.in_channels + c) * s.kernel_h + ki) * s.kernel_w + kj] *
                                       x_at(s, x, n, c, static_cast<std::ptrdiff_t>(oy + ki) - pad,
                                            static_cast<std::ptrdiff_t>(ox + kj) - pad);
                    y[((n * s.out_channels + oc) * oh + oy) * ow + ox] = acc;
                }
}

void conv2d_backward_weights(const ConvShape& s, const double* x, const double* dy, double* dw, double* db) {
    const std::size_t oh = s.out_height(), ow = s.out_width();
    const auto pad = static_cast<std::ptrdiff_t>(s.pad);
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
        for (std::size_t c = 0; c < s.in_channels; ++c)
            for (std::size_t ki = 0; ki < s.kernel_h; ++ki)
                for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                    double acc = 0.0;
                    for (std::size_t n = 0; n < s.batch; ++n)
                        for (std::size_t oy = 0; oy < oh; ++oy)
                            for (std::size_t ox = 0; ox < ow; ++ox)
                                acc += dy[((n * s.out_channels + oc) * oh + oy) * ow + ox] *
                                       x_at(s, x, n, c, static_cast<std::ptrdiff_t>(oy + ki) - pad,
                                            static_cast<std::ptrdiff_t>(ox + kj) - pad);
                    dw[((oc * s.in_channels + c) * s.kernel_h + ki) * s.kernel_w + kj] = acc;
                }
        if (db) {
            double acc = 0.0;
            for (std::size_t n = 0; n < s.batch; ++n)
                for (std::size_t i = 0; i < oh * ow; ++i) acc += dy[(n * s.out_channels + oc) * oh * ow + i];
            db[oc] = acc;
        }
    }
}

void conv2d_backward_input(const ConvShape& s, const double* w, const double* dy, double* dx) {
    const std::size_t oh = s.out_height(), ow = s.out_width();
    for (std::size_t n = 0; n < s.batch; ++n)
        for (std::size_t c = 0; c < s.in_channels; ++c)
            for (std::size_t iy = 0; iy < s.height; ++iy)
                for (std::size_t ix = 0; ix < s.width; ++ix) {
                    double acc = 0.0;
                    for (std::size_t oc = 0; oc < s.out_channels; ++oc)
                        for (std::size_t ki = 0; ki < s.kernel_h; ++ki)
                            for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                                // output position that reads input (iy, ix) through tap (ki, kj)
                                const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy + s.pad) - ki;
                                const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix + s.pad) - kj;
                                if (oy < 0 || ox < 0 || oy >= static_cast<std::ptrdiff_t>(oh) ||
                                    ox >= static_cast<std::ptrdiff_t>(ow))
                                    continue;
                                acc += w[((oc * s.in_channels + c) * s.kernel_h + ki) * s.kernel_w + kj] *
                                       dy[((n * s.out_channels + oc) * oh + oy) * ow + ox];
                            }
                    dx[((n * s.in_channels + c) * s.height + iy) * s.width + ix] = acc;
                }
}

}  // namespace reference

}  // namespace reglearn::kernels
