#pragma once

#include <string>
#include <vector>

#include "prox/image.hpp"

namespace prox {

// In-memory dataset; every item is an [h, w, c] tensor in [-1, 1].
// Pixel bytes map through p / 127.5 - 1, so 0 -> -1 and 255 -> +1.
struct DatasetHandle {
  enum class Source { kIdx, kImageDirectory, kSynthetic };
  Source source = Source::kSynthetic;
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<Tensor> items;
  std::vector<int> labels;  // empty when the source has none

  int count() const { return static_cast<int>(items.size()); }
};

// IDX container (big-endian, magic 0x00000803 for u8 image tensors and
// 0x00000801 for labels). Malformed input raises FormatError with the byte
// offset of the problem.
DatasetHandle load_idx(const std::string& images_path, const std::string& labels_path = "");

// PGM (P5) or PNG, 8-bit gray or RGB, non-interlaced. Format chosen by
// content on load and by file extension on save.
Image load_image_file(const std::string& path);
void save_image_file(const Image& img, const std::string& path);

// All .pgm/.png files in a directory, sorted by name.
DatasetHandle load_image_directory(const std::string& dir);

// Seeded piecewise-smooth images (rectangles, discs, gradients) in [-1, 1].
// Item kinds cycle deterministically: i % 3 == 0 rectangles, 1 discs,
// 2 gradients.
DatasetHandle synthetic_shapes(int count, int size, std::uint64_t seed);

}  // namespace prox
