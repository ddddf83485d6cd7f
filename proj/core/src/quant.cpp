#include "bproj/quant.hpp"

#include <cmath>
#include <string>

#include "bproj/errors.hpp"
#include "bproj/rng.hpp"

namespace bproj {

// ---------------------------------------------------------------------------
// Quantization-aware stepping

ImageVec q_out(const ImageVec& x, const ImageVec& z, const ImageVec& y, const QuantGrid& g) {
  const ImageVec dir = sub(z, y);
  if (l2_norm(dir) == 0.0) return round_to_grid(y, g);
  const double target = l2_dist(z, x);

  ImageVec best;
  double best_gap = 0.0;
  bool have_best = false;
  auto probe = [&](double beta) {
    ImageVec q = round_to_grid(add_scaled(y, beta, dir), g);
    const double gap = l2_dist(q, x) - target;
    if (!have_best || std::fabs(gap) < std::fabs(best_gap)) {
      best = std::move(q);
      best_gap = gap;
      have_best = true;
    }
    return gap;
  };

  probe(1.0);
  double lo = 0.0, hi = 2.0;
  double gap_lo = probe(lo);
  probe(hi);
  // The distortion gap decreases in beta when the step points toward x (the
  // outward case); bisect toward its sign change, keeping the best probe.
  for (int it = 0; it < 24; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gap_mid = probe(mid);
    if ((gap_mid > 0.0) == (gap_lo > 0.0)) {
      lo = mid;
      gap_lo = gap_mid;
    } else {
      hi = mid;
    }
  }
  return best;
}

ImageVec q_in(const ImageVec& z, const ImageVec& y, const QuantGrid& g) {
  const ImageVec dir = sub(z, y);
  const double len = l2_norm(dir);
  if (len == 0.0) return round_to_grid(y, g);
  // Guarantee a move of at least 0.1 in l2 before rounding, so the rounded
  // point cannot collapse back onto y at practical dimensions.
  const double beta = std::max(1.0, 0.1 / len);
  return round_to_grid(add_scaled(y, beta, dir), g);
}

// ---------------------------------------------------------------------------
// Regularized incomplete beta via Lentz continued fraction

namespace {

double beta_cf(double x, double a, double b) {
  // Continued fraction for I_x(a, b), converging fast for x < (a+1)/(a+b+2).
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_reg_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete_reg_beta: a, b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete_reg_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cf(x, a, b) / a;
  }
  return 1.0 - front * beta_cf(1.0 - x, b, a) / b;
}

// ---------------------------------------------------------------------------
// Expected quantization distortion on a sphere

namespace {

void check_predictor_args(int n, double delta, double rho) {
  if (n < 1) throw DomainError("distortion predictor: n must be >= 1");
  if (!(delta > 0.0)) throw DomainError("distortion predictor: delta must be > 0");
  if (rho < 0.0) throw DomainError("distortion predictor: rho must be >= 0");
}

}  // namespace

double expected_sq_distortion_exact(int n, double delta, double rho) {
  check_predictor_args(n, delta, rho);
  if (rho == 0.0) return 0.0;  // rounding a lattice point moves nothing
  if (n == 1) {
    const double k = std::round(rho / delta);
    return (k * delta) * (k * delta);
  }
  const double half_b = 0.5 * static_cast<double>(n - 1);
  auto tail = [&](long l) -> double {  // P(|E_j| >= l * delta)
    if (l == 0) return 1.0;
    const double s = (2.0 * static_cast<double>(l) - 1.0) * delta / (2.0 * rho);
    if (s > 1.0) return 0.0;
    return 1.0 - incomplete_reg_beta(s * s, 0.5, half_b);
  };
  double sum = 0.0;
  double tail_l = tail(1);
  for (long l = 1; tail_l > 0.0; ++l) {
    const double tail_next = tail(l + 1);
    const double e = static_cast<double>(l) * delta;
    sum += e * e * (tail_l - tail_next);
    tail_l = tail_next;
  }
  return static_cast<double>(n) * sum;
}

double expected_sq_distortion_highres(int n, double delta, double rho) {
  check_predictor_args(n, delta, rho);
  return rho * rho + static_cast<double>(n) * delta * delta / 12.0;
}

double mc_quantized_distortion(int n, double delta, double rho, int samples, uint64_t seed) {
  check_predictor_args(n, delta, rho);
  if (samples < 1) throw DomainError("mc_quantized_distortion: samples must be >= 1");
  Rng rng(seed);
  double mean = 0.0;
  std::vector<double> u(n);
  for (int s = 0; s < samples; ++s) {
    double norm2 = 0.0;
    for (int j = 0; j < n; ++j) {
      u[j] = rng.gaussian();
      norm2 += u[j] * u[j];
    }
    const double scale = norm2 > 0.0 ? rho / std::sqrt(norm2) : 0.0;
    double d2 = 0.0;
    for (int j = 0; j < n; ++j) {
      const double q = delta * std::round(u[j] * scale / delta);  // rounded coordinate
      d2 += q * q;  // squared distance from the sphere center (a lattice point)
    }
    mean += (d2 - mean) / static_cast<double>(s + 1);
  }
  return mean;
}

}  // namespace bproj
