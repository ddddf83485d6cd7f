#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bproj/vec.hpp"

namespace bproj {

struct Dataset {
  std::vector<ImageVec> images;
  std::vector<int> labels;
  int rows = 0;  // image shape when loaded from IDX files, 0 otherwise
  int cols = 0;

  size_t size() const { return images.size(); }
};

/// Reads a classic big-endian IDX image/label file pair (magic numbers
/// 0x00000803 and 0x00000801). Pixels are bytes, scaled to [0, 1] as b/255.
/// `limit` caps the number of images kept; the files' record counts must
/// still agree. Throws BadMagicError / TruncatedFileError /
/// CountMismatchError / IoError.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::optional<size_t> limit = std::nullopt);

/// Deterministic two-moons toy set in [0,1]^2. The upper moon (label 0) is
/// the arc (cos u, sin u), u in [0, pi]; the lower moon (label 1) is
/// (1 - cos u, 0.5 - sin u). Gaussian noise with standard deviation
/// `noise_sd` is added in raw arc coordinates, then points are mapped
/// affinely into the unit square and clipped.
Dataset make_two_moons(size_t count, double noise_sd, uint64_t seed);

}  // namespace bproj
