#pragma once

#include <utility>
#include <vector>

#include "prox/tensor.hpp"

namespace prox {

// Raster image with pixel values in [-1, 1], stored as an [h, w, c] tensor.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;
  Tensor pixels;

  Image() = default;
  Image(int h, int w, int c);

  // Wraps an [h, w, c] or [h, w] tensor; range is not checked here.
  static Image from_tensor(const Tensor& t);

  double at(int y, int x, int c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  double& at(int y, int x, int c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
};

// Tiling of an image into square patches. When the image dimensions are not
// multiples of patch_size, the last row/column of patches is anchored to the
// image border and overlaps its neighbor.
struct PatchGrid {
  int patch_size = 0;
  int rows = 0;
  int cols = 0;
  int image_height = 0;
  int image_width = 0;
  std::vector<std::pair<int, int>> origins;  // (y, x) per patch, row-major
};

// Peak signal-to-noise ratio in dB, computed on the [0,1] remapping of the
// [-1,1] range with peak 1. Identical images give +infinity.
double psnr(const Image& reference, const Image& candidate);

// Same metric on flat tensors (used on the solver's vectorized iterates).
double psnr(const Tensor& reference, const Tensor& candidate);

std::pair<std::vector<Image>, PatchGrid> extract_patches(const Image& img, int size);

Image stitch_patches(const std::vector<Image>& patches, const PatchGrid& grid);

// Each output pixel is the mean of its factor x factor block.
Image box_downsample(const Image& img, int factor);

// Each input pixel replicated into a factor x factor block.
Image nearest_upsample(const Image& img, int factor);

// Catmull-Rom bicubic interpolation (a = -0.5), border clamped.
Image bicubic_upsample(const Image& img, int out_h, int out_w);

// Clips every pixel to [-1, 1].
Image clamp_image(const Image& img);

}  // namespace prox
