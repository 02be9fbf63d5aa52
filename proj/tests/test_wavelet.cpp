#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prox/wavelet.hpp"

using namespace prox;

namespace {

Image random_image(int h, int w, int c, RngStream& rng) {
  Image img(h, w, c);
  for (int i = 0; i < img.pixels.size(); ++i) img.pixels[i] = rng.uniform(-1.0, 1.0);
  return img;
}

double coeff_norm(const WaveletCoeffs& c) {
  double s = dot(c.ll, c.ll);
  for (const auto& band : c.bands)
    s += dot(band.lh, band.lh) + dot(band.hl, band.hl) + dot(band.hh, band.hh);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("haar_forward: constant image has zero detail") {
  Image img(8, 8, 1);
  img.pixels.fill(0.7);
  WaveletCoeffs c = haar_forward(img, 3);
  for (const auto& band : c.bands)
    for (const Tensor* t : {&band.lh, &band.hl, &band.hh})
      for (int i = 0; i < t->size(); ++i) CHECK((*t)[i] == 0.0);
}

TEST_CASE("haar_forward: 2x2 all-ones gives LL = 2") {
  Image img(2, 2, 1);
  img.pixels.fill(1.0);
  WaveletCoeffs c = haar_forward(img, 1);
  CHECK(c.ll.size() == 1);
  CHECK(c.ll[0] == doctest::Approx(2.0));
  CHECK(c.bands[0].lh[0] == 0.0);
  CHECK(c.bands[0].hl[0] == 0.0);
  CHECK(c.bands[0].hh[0] == 0.0);
}

TEST_CASE("haar: orthonormality (Parseval) on random 8x8") {
  RngStream rng(1);
  Image img = random_image(8, 8, 1, rng);
  WaveletCoeffs c = haar_forward(img, 2);
  double nx = l2_norm(img.pixels);
  CHECK(std::abs(coeff_norm(c) - nx) <= 1e-12 * nx);
}

TEST_CASE("haar: perfect reconstruction") {
  RngStream rng(2);
  for (int levels = 1; levels <= 4; ++levels) {
    Image img = random_image(16, 16, 1, rng);
    Image back = haar_inverse(haar_forward(img, levels));
    for (int i = 0; i < img.pixels.size(); ++i)
      CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1e-12);
  }

  Image rgb = random_image(8, 8, 3, rng);
  Image back = haar_inverse(haar_forward(rgb, 2));
  for (int i = 0; i < rgb.pixels.size(); ++i)
    CHECK(std::abs(back.pixels[i] - rgb.pixels[i]) <= 1e-12);
}

TEST_CASE("haar: zero coefficients give zero image") {
  Image img(8, 8, 1);
  WaveletCoeffs c = haar_forward(img, 2);
  Image out = haar_inverse(c);
  for (int i = 0; i < out.pixels.size(); ++i) CHECK(out.pixels[i] == 0.0);
}

TEST_CASE("haar: forward(inverse(c)) == c on random coefficients") {
  RngStream rng(3);
  Image img = random_image(16, 16, 1, rng);
  WaveletCoeffs c = haar_forward(img, 2);
  // randomize the coefficients, then round-trip through the synthesis side
  map_coeffs(c, [&](double) { return rng.uniform(-1.0, 1.0); });
  WaveletCoeffs c2 = haar_forward(haar_inverse(c), 2);
  for (int i = 0; i < c.ll.size(); ++i) CHECK(std::abs(c2.ll[i] - c.ll[i]) <= 1e-12);
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < c.bands[k].lh.size(); ++i) {
      CHECK(std::abs(c2.bands[k].lh[i] - c.bands[k].lh[i]) <= 1e-12);
      CHECK(std::abs(c2.bands[k].hl[i] - c.bands[k].hl[i]) <= 1e-12);
      CHECK(std::abs(c2.bands[k].hh[i] - c.bands[k].hh[i]) <= 1e-12);
    }
  }
}

TEST_CASE("haar: adjoint of forward equals inverse") {
  // <Wx, c> == <x, W'c> for random x and c; W' = W^-1 for orthonormal W
  RngStream rng(4);
  Image x = random_image(8, 8, 1, rng);
  WaveletCoeffs c = haar_forward(random_image(8, 8, 1, rng), 2);
  WaveletCoeffs wx = haar_forward(x, 2);

  double lhs = dot(wx.ll, c.ll);
  for (int k = 0; k < 2; ++k) {
    lhs += dot(wx.bands[k].lh, c.bands[k].lh);
    lhs += dot(wx.bands[k].hl, c.bands[k].hl);
    lhs += dot(wx.bands[k].hh, c.bands[k].hh);
  }
  double rhs = dot(x.pixels, haar_inverse(c).pixels);
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(rhs));
}

TEST_CASE("haar: dimension and structure errors") {
  CHECK_THROWS_AS(haar_forward(Image(6, 6, 1), 2), DimensionError);
  CHECK_THROWS_AS(haar_forward(Image(28, 28, 1), 3), DimensionError);  // 28 = 4 * 7

  Image img(8, 8, 1);
  WaveletCoeffs c = haar_forward(img, 2);
  c.bands.pop_back();
  CHECK_THROWS_AS(haar_inverse(c), StructureError);

  WaveletCoeffs c2 = haar_forward(img, 2);
  c2.bands[0].lh = Tensor({2, 2, 1});
  CHECK_THROWS_AS(haar_inverse(c2), StructureError);
}
