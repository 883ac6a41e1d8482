#include "reglearn/forward/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace reglearn {

// ---- heat -------------------------------------------------------------------

double heat_kernel(double t, double kappa) {
    if (t <= 0.0) return 0.0;
    const double log_k = -1.5 * std::log(t) - 1.0 / (4.0 * kappa * kappa * t);
    return std::exp(log_k) / (2.0 * kappa * std::sqrt(std::numbers::pi));
}

LinearOperator heat_operator(std::size_t n, double kappa) {
    if (n < 2) throw std::invalid_argument("heat_operator: n must be at least 2");
    if (!(kappa > 0.0)) throw std::invalid_argument("heat_operator: kappa must be positive");
    const double h = 1.0 / static_cast<double>(n);
    std::vector<double> diag(n);
    for (std::size_t d = 0; d < n; ++d) diag[d] = h * heat_kernel((static_cast<double>(d) + 0.5) * h, kappa);
    DenseMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) a(i, j) = diag[i - j];
    return LinearOperator::from_dense(std::move(a), OperatorKind::heat);
}

// ---- Gaussian blur ------------------------------------------------------------

std::vector<double> gaussian_stencil(double sigma, std::size_t size) {
    if (size % 2 == 0) throw std::invalid_argument("gaussian_stencil: stencil size must be odd");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_stencil: sigma must be positive");
    const long r = static_cast<long>(size / 2);
    std::vector<double> s(size * size);
    double total = 0.0;
    for (long i = -r; i <= r; ++i)
        for (long j = -r; j <= r; ++j) {
            const double v = std::exp(-static_cast<double>(i * i + j * j) / (2.0 * sigma * sigma));
            s[static_cast<std::size_t>((i + r) * static_cast<long>(size) + (j + r))] = v;
            total += v;
        }
    for (double& v : s) v /= total;
    return s;
}

namespace {

// The Gaussian stencil is the outer product of a normalized 1D kernel, so the
// convolution runs as a row pass followed by a column pass.
class BlurImpl final : public OperatorImpl {
public:
    BlurImpl(std::size_t h, std::size_t w, double sigma, std::size_t stencil)
        : h_(h), w_(w), radius_(static_cast<long>(stencil / 2)), taps_(stencil) {
        double total = 0.0;
        for (long k = -radius_; k <= radius_; ++k) {
            taps_[static_cast<std::size_t>(k + radius_)] =
                std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
            total += taps_[static_cast<std::size_t>(k + radius_)];
        }
        for (double& t : taps_) t /= total;
    }

    std::size_t rows() const override { return h_ * w_; }
    std::size_t cols() const override { return h_ * w_; }

    Vector apply(std::span<const double> x) const override {
        const long H = static_cast<long>(h_);
        const long W = static_cast<long>(w_);
        Vector tmp(h_ * w_, 0.0);
        for (long i = 0; i < H; ++i)
            for (long j = 0; j < W; ++j) {
                double s = 0.0;
                for (long k = -radius_; k <= radius_; ++k) {
                    const long jj = j + k;
                    if (jj < 0 || jj >= W) continue;
                    s += taps_[static_cast<std::size_t>(k + radius_)] * x[static_cast<std::size_t>(i * W + jj)];
                }
                tmp[static_cast<std::size_t>(i * W + j)] = s;
            }
        Vector out(h_ * w_, 0.0);
        for (long i = 0; i < H; ++i)
            for (long k = -radius_; k <= radius_; ++k) {
                const long ii = i + k;
                if (ii < 0 || ii >= H) continue;
                const double t = taps_[static_cast<std::size_t>(k + radius_)];
                const double* src = tmp.data() + ii * W;
                double* dst = out.data() + i * W;
                for (long j = 0; j < W; ++j) dst[j] += t * src[j];
            }
        return out;
    }

    Vector apply_transpose(std::span<const double> y) const override { return apply(y); }

private:
    std::size_t h_;
    std::size_t w_;
    long radius_;
    std::vector<double> taps_;
};

}  // namespace

LinearOperator gaussian_blur_operator(std::size_t height, std::size_t width, double sigma,
                                      std::size_t stencil) {
    if (stencil % 2 == 0) throw std::invalid_argument("gaussian_blur_operator: stencil size must be odd");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur_operator: sigma must be positive");
    if (height == 0 || width == 0) throw std::invalid_argument("gaussian_blur_operator: empty image");
    return LinearOperator(OperatorKind::blur2d, std::make_shared<BlurImpl>(height, width, sigma, stencil));
}

// ---- parallel-beam projector ------------------------------------------------------

double radon_ray_spacing(std::size_t n_rays) {
    return 2.0 * std::numbers::sqrt2 / static_cast<double>(n_rays);
}

double radon_ray_offset(std::size_t r, std::size_t n_rays) {
    return -std::numbers::sqrt2 + (static_cast<double>(r) + 0.5) * radon_ray_spacing(n_rays);
}

namespace {

// Length of the segment of the line {p + t d} inside the box, Liang-Barsky.
double chord_length(double px, double py, double dx, double dy, double x0, double x1, double y0,
                    double y1) {
    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    auto clip = [&](double p, double d, double lo, double hi) {
        if (d == 0.0) {
            if (p < lo || p > hi) {
                t_lo = 1.0;
                t_hi = 0.0;
            }
            return;
        }
        double a = (lo - p) / d;
        double b = (hi - p) / d;
        if (a > b) std::swap(a, b);
        t_lo = std::max(t_lo, a);
        t_hi = std::min(t_hi, b);
    };
    clip(px, dx, x0, x1);
    clip(py, dy, y0, y1);
    return t_hi > t_lo ? t_hi - t_lo : 0.0;
}

}  // namespace

LinearOperator radon_operator(std::size_t n, std::size_t n_angles, std::size_t n_rays) {
    if (n == 0 || n_angles == 0 || n_rays == 0)
        throw std::invalid_argument("radon_operator: sizes must be positive");
    const double w = 2.0 / static_cast<double>(n);
    const double reach = w * std::numbers::sqrt2 * 0.5 * (1.0 + 1e-12);
    SparseRows a;
    a.rows = n_angles * n_rays;
    a.cols = n * n;
    a.row_start.reserve(a.rows + 1);
    a.row_start.push_back(0);
    for (std::size_t ia = 0; ia < n_angles; ++ia) {
        const double theta = std::numbers::pi * static_cast<double>(ia) / static_cast<double>(n_angles);
        const double ct = std::cos(theta);
        const double st = std::sin(theta);
        for (std::size_t ir = 0; ir < n_rays; ++ir) {
            const double s = radon_ray_offset(ir, n_rays);
            const double px = s * ct;
            const double py = s * st;
            for (std::size_t i = 0; i < n; ++i) {
                const double y1 = 1.0 - static_cast<double>(i) * w;
                const double y0 = y1 - w;
                for (std::size_t j = 0; j < n; ++j) {
                    const double x0 = -1.0 + static_cast<double>(j) * w;
                    const double x1 = x0 + w;
                    const double cx = 0.5 * (x0 + x1);
                    const double cy = 0.5 * (y0 + y1);
                    if (std::abs(cx * ct + cy * st - s) > reach) continue;
                    const double len = chord_length(px, py, -st, ct, x0, x1, y0, y1);
                    if (len <= 0.0) continue;
                    a.col_index.push_back(i * n + j);
                    a.values.push_back(len);
                }
            }
            a.row_start.push_back(a.values.size());
        }
    }
    return from_sparse(std::move(a), OperatorKind::radon);
}

// ---- diffusion ------------------------------------------------------------------

Vector neumann_laplacian(std::span<const double> x, std::size_t side) {
    const double inv_h2 = static_cast<double>(side * side);
    Vector out(side * side, 0.0);
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
            const std::size_t k = i * side + j;
            double s = 0.0;
            if (i > 0) s += x[k - side] - x[k];
            if (i + 1 < side) s += x[k + side] - x[k];
            if (j > 0) s += x[k - 1] - x[k];
            if (j + 1 < side) s += x[k + 1] - x[k];
            out[k] = s * inv_h2;
        }
    return out;
}

namespace {

// Lower banded Cholesky factor of an SPD matrix with half-bandwidth bw.
class BandedCholesky {
public:
    BandedCholesky(std::size_t n, std::size_t bw) : n_(n), bw_(bw), l_(n * (bw + 1), 0.0) {}

    // Entry (i, j) with i - bw <= j <= i.
    double& at(std::size_t i, std::size_t j) { return l_[i * (bw_ + 1) + (i - j)]; }
    double at(std::size_t i, std::size_t j) const { return l_[i * (bw_ + 1) + (i - j)]; }

    void factor() {
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t jlo = i > bw_ ? i - bw_ : 0;
            for (std::size_t j = jlo; j <= i; ++j) {
                double s = at(i, j);
                const std::size_t klo = std::max(jlo, j > bw_ ? j - bw_ : 0);
                for (std::size_t k = klo; k < j; ++k) s -= at(i, k) * at(j, k);
                if (i == j) {
                    if (!(s > 0.0))
                        throw std::runtime_error("diffusion_operator: singular Crank-Nicolson step system");
                    at(i, i) = std::sqrt(s);
                } else {
                    at(i, j) = s / at(j, j);
                }
            }
        }
    }

    void solve(std::span<double> x) const {
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t jlo = i > bw_ ? i - bw_ : 0;
            double s = x[i];
            for (std::size_t j = jlo; j < i; ++j) s -= at(i, j) * x[j];
            x[i] = s / at(i, i);
        }
        for (std::size_t i = n_; i-- > 0;) {
            const std::size_t jhi = std::min(n_ - 1, i + bw_);
            double s = x[i];
            for (std::size_t j = i + 1; j <= jhi; ++j) s -= at(j, i) * x[j];
            x[i] = s / at(i, i);
        }
    }

private:
    std::size_t n_;
    std::size_t bw_;
    std::vector<double> l_;
};

class DiffusionImpl final : public OperatorImpl {
public:
    DiffusionImpl(std::size_t side, double t_final, std::size_t n_steps)
        : side_(side), steps_(n_steps), half_dt_(0.5 * t_final / static_cast<double>(n_steps)),
          factor_(side * side, side) {
        // S = I - (dt/2) L, assembled into the band.
        const std::size_t n = side * side;
        const double c = half_dt_ * static_cast<double>(side * side);
        for (std::size_t i = 0; i < side; ++i)
            for (std::size_t j = 0; j < side; ++j) {
                const std::size_t k = i * side + j;
                double neighbours = 0.0;
                if (i > 0) {
                    factor_.at(k, k - side) = -c;
                    neighbours += 1.0;
                }
                if (i + 1 < side) neighbours += 1.0;
                if (j > 0) {
                    factor_.at(k, k - 1) = -c;
                    neighbours += 1.0;
                }
                if (j + 1 < side) neighbours += 1.0;
                factor_.at(k, k) = 1.0 + c * neighbours;
            }
        (void)n;
        factor_.factor();
    }

    std::size_t rows() const override { return side_ * side_; }
    std::size_t cols() const override { return side_ * side_; }

    Vector apply(std::span<const double> x) const override {
        Vector cur(x.begin(), x.end());
        for (std::size_t s = 0; s < steps_; ++s) {
            const Vector lap = neumann_laplacian(cur, side_);
            for (std::size_t k = 0; k < cur.size(); ++k) cur[k] += half_dt_ * lap[k];
            factor_.solve(cur);
        }
        return cur;
    }

    // L is symmetric and the step matrices commute, so A is symmetric.
    Vector apply_transpose(std::span<const double> y) const override { return apply(y); }

private:
    std::size_t side_;
    std::size_t steps_;
    double half_dt_;
    BandedCholesky factor_;
};

}  // namespace

LinearOperator diffusion_operator(std::size_t side, double t_final, std::size_t n_steps) {
    if (side < 3) throw std::invalid_argument("diffusion_operator: side must be at least 3");
    if (!(t_final > 0.0)) throw std::invalid_argument("diffusion_operator: t_final must be positive");
    if (n_steps < 1) throw std::invalid_argument("diffusion_operator: n_steps must be at least 1");
    return LinearOperator(OperatorKind::diffusion, std::make_shared<DiffusionImpl>(side, t_final, n_steps));
}

}  // namespace reglearn
