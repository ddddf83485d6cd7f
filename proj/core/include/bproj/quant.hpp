#pragma once

#include <cstdint>

#include "bproj/vec.hpp"

namespace bproj {

/// Quantize an outward (distortion-reducing) step from y to z, relative to
/// the original image x. Searches the scaling of the step, beta in [0, 2],
/// so that the rounded point's distortion |Q(y + beta (z - y)) - x| best
/// matches the real-valued target |z - x|: beta = 1 is probed first, then 0
/// and 2, then a 24-step bisection; the candidate with the smallest absolute
/// distortion gap wins (first seen wins ties). Deterministic.
ImageVec q_out(const ImageVec& x, const ImageVec& z, const ImageVec& y, const QuantGrid& g);

/// Quantize an inward (loss-reducing) step from y to z by overshooting it so
/// grid rounding cannot undo the move: beta = max(1, 0.1 / |z - y|), then
/// round. Returns round(y) when z == y.
ImageVec q_in(const ImageVec& z, const ImageVec& y, const QuantGrid& g);

/// Regularized incomplete beta function I_x(a, b), a, b > 0, x in [0, 1],
/// evaluated by continued fraction to an absolute accuracy of 1e-10.
double incomplete_reg_beta(double x, double a, double b);

/// Expected squared quantized distortion E(D^2) in n dimensions: a point is
/// drawn uniformly from the sphere of radius rho around a lattice point and
/// rounded coordinate-wise to the lattice of spacing delta; D is the distance
/// from the sphere's center to the rounded point.
///
/// Writing E_j for the j-th rounding error and s(l) = (2l - 1) delta / (2 rho):
///   P(|E_j| >= l delta) = 1                                   (l = 0)
///                       = 1 - I_{s(l)^2}(1/2, (n-1)/2)        (0 <= s(l) <= 1)
///                       = 0                                   (s(l) > 1)
/// and E(D^2) = n * sum_l (l delta)^2 P(|E_j| = l delta). For n = 1 the
/// sphere is the two-point set {-rho, +rho} and the sum collapses to
/// (round(rho/delta) * delta)^2. Returns 0 for rho == 0; throws DomainError
/// for rho < 0, delta <= 0 or n < 1.
double expected_sq_distortion_exact(int n, double delta, double rho);

/// High-resolution approximation of the same quantity: rho^2 + n delta^2/12.
double expected_sq_distortion_highres(int n, double delta, double rho);

/// Monte Carlo estimate of the same E(D^2): `samples` uniform points on the
/// sphere (Gaussian direction, rescaled), each rounded coordinate-wise to the
/// unbounded lattice, measuring the distance back to the center.
/// Deterministic for a fixed seed.
double mc_quantized_distortion(int n, double delta, double rho, int samples, uint64_t seed);

}  // namespace bproj
