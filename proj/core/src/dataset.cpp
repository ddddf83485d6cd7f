#include "bproj/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bproj/errors.hpp"
#include "bproj/rng.hpp"

namespace bproj {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;
constexpr double kPi = 3.141592653589793238462643383279502884;

struct File {
  std::FILE* f = nullptr;
  explicit File(const std::string& path) : f(std::fopen(path.c_str(), "rb")) {
    if (!f) throw IoError("cannot open " + path);
  }
  ~File() {
    if (f) std::fclose(f);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;
};

uint32_t read_u32_be(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw TruncatedFileError(path + ": truncated header");
  return (uint32_t{b[0]} << 24) | (uint32_t{b[1]} << 16) | (uint32_t{b[2]} << 8) | b[3];
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::optional<size_t> limit) {
  File imgf(images_path);
  const uint32_t img_magic = read_u32_be(imgf.f, images_path);
  if (img_magic != kImageMagic) {
    throw BadMagicError(images_path + ": bad image magic");
  }
  const uint32_t img_count = read_u32_be(imgf.f, images_path);
  const uint32_t rows = read_u32_be(imgf.f, images_path);
  const uint32_t cols = read_u32_be(imgf.f, images_path);

  File labf(labels_path);
  const uint32_t lab_magic = read_u32_be(labf.f, labels_path);
  if (lab_magic != kLabelMagic) {
    throw BadMagicError(labels_path + ": bad label magic");
  }
  const uint32_t lab_count = read_u32_be(labf.f, labels_path);

  if (img_count != lab_count) {
    throw CountMismatchError(images_path + ": " + std::to_string(img_count) +
                             " images vs " + std::to_string(lab_count) + " labels");
  }

  const size_t keep = limit ? std::min<size_t>(*limit, img_count) : img_count;
  const size_t pixels = static_cast<size_t>(rows) * cols;

  Dataset ds;
  ds.rows = static_cast<int>(rows);
  ds.cols = static_cast<int>(cols);
  ds.images.reserve(keep);
  ds.labels.reserve(keep);

  std::vector<unsigned char> buf(pixels);
  for (size_t i = 0; i < keep; ++i) {
    if (std::fread(buf.data(), 1, pixels, imgf.f) != pixels) {
      throw TruncatedFileError(images_path + ": truncated image data");
    }
    ImageVec img(pixels);
    for (size_t j = 0; j < pixels; ++j) img[j] = buf[j] / 255.0;
    ds.images.push_back(std::move(img));

    unsigned char lab;
    if (std::fread(&lab, 1, 1, labf.f) != 1) {
      throw TruncatedFileError(labels_path + ": truncated label data");
    }
    ds.labels.push_back(static_cast<int>(lab));
  }
  return ds;
}

Dataset make_two_moons(size_t count, double noise_sd, uint64_t seed) {
  if (noise_sd < 0.0) throw DomainError("make_two_moons: negative noise_sd");
  Rng rng(seed);
  Dataset ds;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  const size_t n0 = (count + 1) / 2;
  for (size_t i = 0; i < count; ++i) {
    const bool upper = i < n0;
    const size_t k = upper ? i : i - n0;
    const size_t n = upper ? n0 : count - n0;
    const double u = n > 1 ? kPi * static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
    double x = upper ? std::cos(u) : 1.0 - std::cos(u);
    double y = upper ? std::sin(u) : 0.5 - std::sin(u);
    if (noise_sd > 0.0) {
      x += noise_sd * rng.gaussian();
      y += noise_sd * rng.gaussian();
    }
    // Raw moons span [-1, 2] x [-0.5, 1]; map into the unit square.
    ds.images.push_back(clip01({(x + 1.0) / 3.0, (y + 0.5) / 1.5}));
    ds.labels.push_back(upper ? 0 : 1);
  }
  return ds;
}

}  // namespace bproj
