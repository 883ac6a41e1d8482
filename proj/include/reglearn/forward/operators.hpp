#pragma once

#include "reglearn/forward/linear_operator.hpp"

namespace reglearn {

// First-passage heat kernel k(t) = t^{-3/2} / (2 kappa sqrt(pi)) exp(-1/(4 kappa^2 t)).
double heat_kernel(double t, double kappa);

// Lower-triangular Toeplitz matrix from midpoint quadrature with h = 1/n:
// A[i][j] = h k((i - j + 1/2) h) for j <= i.
LinearOperator heat_operator(std::size_t n, double kappa = 1.0);

// Normalized (sum = 1) Gaussian stencil of odd size, row-major size x size.
std::vector<double> gaussian_stencil(double sigma, std::size_t size);

// 2D convolution with the Gaussian stencil on an h x w image, zero padding
// outside the image. Symmetric, so apply_transpose == apply.
LinearOperator gaussian_blur_operator(std::size_t height, std::size_t width, double sigma,
                                      std::size_t stencil);

// Parallel-beam projector on an n x n pixel grid covering [-1, 1]^2.
// Row (angle a, ray r) = a * n_rays + r holds the chord length of the ray
// through each pixel. Angles a*pi/n_angles; detector offsets are the
// centres of n_rays equal cells spanning [-sqrt 2, sqrt 2].
LinearOperator radon_operator(std::size_t n, std::size_t n_angles, std::size_t n_rays);

// Detector offset of ray r, exposed for tests that integrate over rays.
double radon_ray_offset(std::size_t r, std::size_t n_rays);
double radon_ray_spacing(std::size_t n_rays);

// Maps an initial condition on a side x side cell-centred grid over [0,1]^2
// to the Crank-Nicolson solution of x_t = Laplace(x) at t_final, homogeneous
// Neumann boundary, n_steps equal steps. Each step solves
// (I - dt/2 L) x+ = (I + dt/2 L) x with a banded Cholesky factor.
LinearOperator diffusion_operator(std::size_t side, double t_final, std::size_t n_steps);

// 5-point Laplacian with reflecting (Neumann) boundary, cell-centred, h = 1/side.
Vector neumann_laplacian(std::span<const double> x, std::size_t side);

}  // namespace reglearn
