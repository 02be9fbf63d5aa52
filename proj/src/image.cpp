#include "prox/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prox {

Image::Image(int h, int w, int c) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1 || (c != 1 && c != 3))
    throw DimensionError("image dimensions must be positive with 1 or 3 channels");
  pixels = Tensor({h, w, c});
}

Image Image::from_tensor(const Tensor& t) {
  const auto& s = t.shape();
  Image img;
  if (s.size() == 3) {
    img.height = s[0];
    img.width = s[1];
    img.channels = s[2];
  } else if (s.size() == 2) {
    img.height = s[0];
    img.width = s[1];
    img.channels = 1;
  } else {
    throw DimensionError("image tensor must have shape [h,w,c] or [h,w]");
  }
  if (img.channels != 1 && img.channels != 3)
    throw DimensionError("image must have 1 or 3 channels");
  img.pixels = t.reshaped({img.height, img.width, img.channels});
  return img;
}

double psnr(const Tensor& reference, const Tensor& candidate) {
  if (!reference.same_shape(candidate)) throw DimensionError("psnr: shape mismatch");
  double mse = 0.0;
  const int n = reference.size();
  for (int i = 0; i < n; ++i) {
    // [-1,1] -> [0,1] remap: differences halve.
    double d = 0.5 * (reference[i] - candidate[i]);
    mse += d * d;
  }
  mse /= n;
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const Image& reference, const Image& candidate) {
  if (!reference.pixels.same_shape(candidate.pixels))
    throw DimensionError("psnr: shape mismatch");
  return psnr(reference.pixels, candidate.pixels);
}

std::pair<std::vector<Image>, PatchGrid> extract_patches(const Image& img, int size) {
  if (size < 1 || size > img.height || size > img.width)
    throw DimensionError("extract_patches: patch size exceeds image");

  PatchGrid grid;
  grid.patch_size = size;
  grid.rows = (img.height + size - 1) / size;
  grid.cols = (img.width + size - 1) / size;
  grid.image_height = img.height;
  grid.image_width = img.width;

  std::vector<Image> patches;
  patches.reserve(static_cast<size_t>(grid.rows) * grid.cols);
  for (int r = 0; r < grid.rows; ++r) {
    int oy = std::min(r * size, img.height - size);  // last row anchored to border
    for (int c = 0; c < grid.cols; ++c) {
      int ox = std::min(c * size, img.width - size);
      grid.origins.emplace_back(oy, ox);
      Image p(size, size, img.channels);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          for (int ch = 0; ch < img.channels; ++ch)
            p.at(y, x, ch) = img.at(oy + y, ox + x, ch);
      patches.push_back(std::move(p));
    }
  }
  return {std::move(patches), std::move(grid)};
}

Image stitch_patches(const std::vector<Image>& patches, const PatchGrid& grid) {
  if (static_cast<int>(patches.size()) != grid.rows * grid.cols ||
      static_cast<int>(grid.origins.size()) != grid.rows * grid.cols)
    throw GridError("stitch_patches: patch count does not match grid");

  const int channels = patches.empty() ? 1 : patches[0].channels;
  Image out(grid.image_height, grid.image_width, channels);
  // Later patches overwrite earlier ones on overlap.
  for (size_t i = 0; i < patches.size(); ++i) {
    const Image& p = patches[i];
    if (p.height != grid.patch_size || p.width != grid.patch_size || p.channels != channels)
      throw GridError("stitch_patches: patch geometry does not match grid");
    auto [oy, ox] = grid.origins[i];
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x)
        for (int ch = 0; ch < channels; ++ch)
          out.at(oy + y, ox + x, ch) = p.at(y, x, ch);
  }
  return out;
}

Image box_downsample(const Image& img, int factor) {
  if (factor < 1 || img.height % factor != 0 || img.width % factor != 0)
    throw DimensionError("box_downsample: factor must divide image dimensions");
  Image out(img.height / factor, img.width / factor, img.channels);
  const double inv = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            s += img.at(y * factor + dy, x * factor + dx, c);
        out.at(y, x, c) = s * inv;
      }
  return out;
}

Image nearest_upsample(const Image& img, int factor) {
  if (factor < 1) throw ParameterError("nearest_upsample: factor must be >= 1");
  if (factor == 1) return img;
  Image out(img.height * factor, img.width * factor, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y / factor, x / factor, c);
  return out;
}

namespace {

// Catmull-Rom weights for the four taps around a sample at offset t in [0,1).
void catmull_rom_weights(double t, double w[4]) {
  constexpr double a = -0.5;
  double t2 = t * t;
  double t3 = t2 * t;
  w[0] = a * t3 - 2.0 * a * t2 + a * t;
  w[1] = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0;
  w[2] = -(a + 2.0) * t3 + (2.0 * a + 3.0) * t2 - a * t;
  w[3] = -a * t3 + a * t2;
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

}  // namespace

Image bicubic_upsample(const Image& img, int out_h, int out_w) {
  if (out_h < img.height || out_w < img.width)
    throw DimensionError("bicubic_upsample: output must not be smaller than input");
  if (out_h == img.height && out_w == img.width) return img;

  // Horizontal pass, then vertical.
  Image mid(img.height, out_w, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  for (int x = 0; x < out_w; ++x) {
    double src = (x + 0.5) * sx - 0.5;
    int x0 = static_cast<int>(std::floor(src));
    double w[4];
    catmull_rom_weights(src - x0, w);
    for (int y = 0; y < img.height; ++y)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k)
          s += w[k] * img.at(y, clamp_index(x0 - 1 + k, img.width), c);
        mid.at(y, x, c) = s;
      }
  }

  Image out(out_h, out_w, img.channels);
  const double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double src = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(src));
    double w[4];
    catmull_rom_weights(src - y0, w);
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k)
          s += w[k] * mid.at(clamp_index(y0 - 1 + k, img.height), x, c);
        out.at(y, x, c) = s;
      }
  }
  return out;
}

Image clamp_image(const Image& img) {
  Image out = img;
  for (int i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = std::clamp(out.pixels[i], -1.0, 1.0);
  return out;
}

}  // namespace prox
