#include "prox/wavelet.hpp"

namespace prox {

namespace {

void check_levels(int h, int w, int levels) {
  if (levels < 1) throw ParameterError("haar: levels must be >= 1");
  int div = 1 << levels;
  if (h % div != 0 || w % div != 0)
    throw DimensionError("haar: image dimensions must be divisible by 2^levels");
}

}  // namespace

WaveletCoeffs haar_forward(const Image& img, int levels) {
  check_levels(img.height, img.width, levels);

  WaveletCoeffs out;
  out.levels = levels;
  out.height = img.height;
  out.width = img.width;
  out.channels = img.channels;

  Tensor approx = img.pixels;  // [h, w, c] at the current level
  int h = img.height;
  int w = img.width;
  const int c = img.channels;

  for (int level = 0; level < levels; ++level) {
    int h2 = h / 2;
    int w2 = w / 2;
    Tensor ll({h2, w2, c}), lh({h2, w2, c}), hl({h2, w2, c}), hh({h2, w2, c});
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x)
        for (int ch = 0; ch < c; ++ch) {
          double a = approx[((2 * y) * w + 2 * x) * c + ch];
          double b = approx[((2 * y) * w + 2 * x + 1) * c + ch];
          double d = approx[((2 * y + 1) * w + 2 * x) * c + ch];
          double e = approx[((2 * y + 1) * w + 2 * x + 1) * c + ch];
          int i = (y * w2 + x) * c + ch;
          ll[i] = 0.5 * (a + b + d + e);
          hl[i] = 0.5 * (a - b + d - e);
          lh[i] = 0.5 * (a + b - d - e);
          hh[i] = 0.5 * (a - b - d + e);
        }
    out.bands.push_back({std::move(lh), std::move(hl), std::move(hh)});
    approx = std::move(ll);
    h = h2;
    w = w2;
  }
  out.ll = std::move(approx);
  return out;
}

Image haar_inverse(const WaveletCoeffs& coeffs) {
  if (coeffs.levels < 1 || static_cast<int>(coeffs.bands.size()) != coeffs.levels)
    throw StructureError("haar_inverse: band count does not match levels");
  check_levels(coeffs.height, coeffs.width, coeffs.levels);

  const int c = coeffs.channels;
  int h = coeffs.height >> coeffs.levels;
  int w = coeffs.width >> coeffs.levels;
  if (coeffs.ll.shape() != std::vector<int>{h, w, c})
    throw StructureError("haar_inverse: LL band has wrong shape");

  Tensor approx = coeffs.ll;
  for (int level = coeffs.levels - 1; level >= 0; --level) {
    const WaveletBand& band = coeffs.bands[level];
    std::vector<int> want{h, w, c};
    if (band.lh.shape() != want || band.hl.shape() != want || band.hh.shape() != want)
      throw StructureError("haar_inverse: detail band has wrong shape");

    int h2 = h * 2;
    int w2 = w * 2;
    Tensor up({h2, w2, c});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) {
          int i = (y * w + x) * c + ch;
          double ll = approx[i];
          double hl = band.hl[i];
          double lh = band.lh[i];
          double hh = band.hh[i];
          up[((2 * y) * w2 + 2 * x) * c + ch] = 0.5 * (ll + hl + lh + hh);
          up[((2 * y) * w2 + 2 * x + 1) * c + ch] = 0.5 * (ll - hl + lh - hh);
          up[((2 * y + 1) * w2 + 2 * x) * c + ch] = 0.5 * (ll + hl - lh - hh);
          up[((2 * y + 1) * w2 + 2 * x + 1) * c + ch] = 0.5 * (ll - hl - lh + hh);
        }
    approx = std::move(up);
    h = h2;
    w = w2;
  }
  return Image::from_tensor(approx);
}

}  // namespace prox
