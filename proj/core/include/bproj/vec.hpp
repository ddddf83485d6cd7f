#pragma once

#include <vector>

namespace bproj {

/// Flattened image: a vector of doubles, each coordinate nominally in [0, 1].
using ImageVec = std::vector<double>;

enum class NormKind { l2, linf };

/// Closed norm ball, the feasible set of the fixed-budget attacks.
struct Ball {
  ImageVec center;
  double radius = 0.0;
  NormKind kind = NormKind::l2;
};

/// Uniform quantization lattice on [0, 1]: the L values k/(L-1), k = 0..L-1.
/// L = 256 models 8-bit images (spacing delta = 1/255).
struct QuantGrid {
  int levels = 0;
  double delta = 0.0;

  explicit QuantGrid(int levels_in);
};

double dot(const ImageVec& a, const ImageVec& b);
double l2_norm(const ImageVec& v);
double linf_norm(const ImageVec& v);
double l2_dist(const ImageVec& a, const ImageVec& b);

/// a - b
ImageVec sub(const ImageVec& a, const ImageVec& b);

/// a + s * b
ImageVec add_scaled(const ImageVec& a, double s, const ImageVec& b);

/// v / |v|_2; throws ZeroVectorError when |v| == 0.
ImageVec normalize(const ImageVec& v);

/// Clamp every coordinate into [0, 1].
ImageVec clip01(ImageVec v);

/// Euclidean projection onto the ball (identity inside it). For linf balls
/// this is the per-coordinate clamp.
ImageVec project_ball(const ImageVec& v, const Ball& b);

/// Radial projection onto the sphere S[center; radius]. Throws
/// ZeroVectorError when v == center (no direction to project along).
ImageVec project_sphere(const ImageVec& v, const ImageVec& center, double radius);

/// Clamp into [0, 1], then round each coordinate to the nearest lattice value
/// (ties round half away from zero). Exactly idempotent.
ImageVec round_to_grid(const ImageVec& v, const QuantGrid& g);

/// True when every coordinate equals some k/(L-1), k in [0, L-1], within an
/// absolute tolerance of 1e-9.
bool is_on_grid(const ImageVec& v, const QuantGrid& g);

}  // namespace bproj
