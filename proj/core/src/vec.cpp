#include "bproj/vec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bproj/errors.hpp"

namespace bproj {

namespace {

void require_same_dim(const ImageVec& a, const ImageVec& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": sizes " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

}  // namespace

QuantGrid::QuantGrid(int levels_in) : levels(levels_in) {
  if (levels < 2) {
    throw DomainError("QuantGrid needs at least 2 levels, got " + std::to_string(levels));
  }
  delta = 1.0 / static_cast<double>(levels - 1);
}

double dot(const ImageVec& a, const ImageVec& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const ImageVec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double linf_norm(const ImageVec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

double l2_dist(const ImageVec& a, const ImageVec& b) {
  require_same_dim(a, b, "l2_dist");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

ImageVec sub(const ImageVec& a, const ImageVec& b) {
  require_same_dim(a, b, "sub");
  ImageVec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

ImageVec add_scaled(const ImageVec& a, double s, const ImageVec& b) {
  require_same_dim(a, b, "add_scaled");
  ImageVec r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + s * b[i];
  return r;
}

ImageVec normalize(const ImageVec& v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw ZeroVectorError("normalize: zero vector");
  ImageVec r(v.size());
  for (size_t i = 0; i < v.size(); ++i) r[i] = v[i] / n;
  return r;
}

ImageVec clip01(ImageVec v) {
  for (double& x : v) x = std::min(1.0, std::max(0.0, x));
  return v;
}

ImageVec project_ball(const ImageVec& v, const Ball& b) {
  require_same_dim(v, b.center, "project_ball");
  if (b.radius < 0.0) throw DomainError("project_ball: negative radius");
  if (b.kind == NormKind::linf) {
    ImageVec r(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
      r[i] = std::min(b.center[i] + b.radius, std::max(b.center[i] - b.radius, v[i]));
    }
    return r;
  }
  const double d = l2_dist(v, b.center);
  if (d <= b.radius) return v;
  ImageVec r(v.size());
  const double s = b.radius / d;
  for (size_t i = 0; i < v.size(); ++i) r[i] = b.center[i] + s * (v[i] - b.center[i]);
  return r;
}

ImageVec project_sphere(const ImageVec& v, const ImageVec& center, double radius) {
  require_same_dim(v, center, "project_sphere");
  if (radius < 0.0) throw DomainError("project_sphere: negative radius");
  const ImageVec dir = normalize(sub(v, center));  // throws ZeroVectorError at the center
  return add_scaled(center, radius, dir);
}

ImageVec round_to_grid(const ImageVec& v, const QuantGrid& g) {
  const double scale = static_cast<double>(g.levels - 1);
  ImageVec r(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    const double x = std::min(1.0, std::max(0.0, v[i]));
    // std::round rounds ties half away from zero. Re-deriving the value as
    // k / (L - 1) makes rounding exactly idempotent.
    r[i] = std::round(x * scale) / scale;
  }
  return r;
}

bool is_on_grid(const ImageVec& v, const QuantGrid& g) {
  const double scale = static_cast<double>(g.levels - 1);
  for (double x : v) {
    const double k = std::round(x * scale);
    if (k < 0.0 || k > scale) return false;
    if (std::fabs(x - k / scale) > 1e-9) return false;
  }
  return true;
}

}  // namespace bproj
