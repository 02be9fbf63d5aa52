#pragma once

#include <vector>

#include "prox/image.hpp"

namespace prox {

// Detail bands of one decomposition level, each of shape [h, w, c] at that
// level's resolution.
struct WaveletBand {
  Tensor lh;  // vertical detail (row smooth, column difference)
  Tensor hl;  // horizontal detail
  Tensor hh;  // diagonal detail
};

// Orthonormal 2-D Haar decomposition: level k+1 is computed from the LL band
// of level k. Total coefficient count equals the pixel count.
struct WaveletCoeffs {
  int levels = 0;
  int height = 0;
  int width = 0;
  int channels = 1;
  Tensor ll;                      // coarsest approximation
  std::vector<WaveletBand> bands; // bands[k] holds level k+1 details
};

// Requires height and width divisible by 2^levels.
WaveletCoeffs haar_forward(const Image& img, int levels);

Image haar_inverse(const WaveletCoeffs& coeffs);

// Applies fn to every coefficient (approximation and detail alike).
template <typename Fn>
void map_coeffs(WaveletCoeffs& coeffs, Fn fn) {
  for (auto& band : coeffs.bands) {
    for (Tensor* t : {&band.lh, &band.hl, &band.hh})
      for (int i = 0; i < t->size(); ++i) (*t)[i] = fn((*t)[i]);
  }
  for (int i = 0; i < coeffs.ll.size(); ++i) coeffs.ll[i] = fn(coeffs.ll[i]);
}

}  // namespace prox
