#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "prox/image.hpp"

using namespace prox;

namespace {

Image random_image(int h, int w, int c, RngStream& rng) {
  Image img(h, w, c);
  for (int i = 0; i < img.pixels.size(); ++i) img.pixels[i] = rng.uniform(-1.0, 1.0);
  return img;
}

}  // namespace

TEST_CASE("psnr: identical, constant offset, and MSE oracle") {
  RngStream rng(1);
  Image a = random_image(8, 8, 1, rng);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());

  // constant difference of 0.1 on the [0,1] scale = 0.2 in [-1,1] units
  Image b = a;
  for (int i = 0; i < b.pixels.size(); ++i) b.pixels[i] -= 0.2;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-10));

  Image c = random_image(8, 8, 1, rng);
  double mse = 0.0;
  for (int i = 0; i < a.pixels.size(); ++i) {
    double d = (a.pixels[i] + 1.0) / 2.0 - (c.pixels[i] + 1.0) / 2.0;
    mse += d * d;
  }
  mse /= a.pixels.size();
  double expected = 10.0 * std::log10(1.0 / mse);
  CHECK(std::abs(psnr(a, c) - expected) <= 1e-10 * std::abs(expected));

  CHECK(psnr(a, c) == psnr(c, a));
  CHECK_THROWS_AS(psnr(a, random_image(4, 4, 1, rng)), DimensionError);
}

TEST_CASE("extract_patches: exact tiling") {
  RngStream rng(2);
  Image img = random_image(128, 128, 1, rng);
  auto [patches, grid] = extract_patches(img, 64);
  CHECK(patches.size() == 4);
  CHECK(grid.rows == 2);
  CHECK(grid.cols == 2);

  Image one = random_image(64, 64, 1, rng);
  auto [single, sgrid] = extract_patches(one, 64);
  CHECK(single.size() == 1);
  for (int i = 0; i < one.pixels.size(); ++i) CHECK(single[0].pixels[i] == one.pixels[i]);
}

TEST_CASE("extract_patches: border-anchored overlap covers every pixel") {
  RngStream rng(3);
  Image img = random_image(100, 100, 1, rng);
  auto [patches, grid] = extract_patches(img, 64);
  CHECK(grid.rows == 2);
  CHECK(grid.cols == 2);

  // coverage oracle: mark every pixel touched by some patch
  std::vector<int> covered(100 * 100, 0);
  for (size_t p = 0; p < patches.size(); ++p) {
    auto [oy, ox] = grid.origins[p];
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) covered[(oy + y) * 100 + ox + x] += 1;
  }
  for (int i = 0; i < 100 * 100; ++i) CHECK(covered[i] >= 1);

  CHECK_THROWS_AS(extract_patches(img, 101), DimensionError);
}

TEST_CASE("stitch_patches: round trips") {
  RngStream rng(4);
  for (int size : {128, 100}) {
    Image img = random_image(size, size, 1, rng);
    auto [patches, grid] = extract_patches(img, 64);
    Image back = stitch_patches(patches, grid);
    for (int i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
  }

  Image img = random_image(32, 32, 3, rng);
  auto [patches, grid] = extract_patches(img, 32);
  Image back = stitch_patches(patches, grid);
  for (int i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);

  patches.pop_back();
  CHECK_THROWS_AS(stitch_patches(patches, grid), GridError);
}

TEST_CASE("box_downsample: block means") {
  Image img(2, 2, 1);
  img.at(0, 0) = 1;
  img.at(0, 1) = 3;
  img.at(1, 0) = 5;
  img.at(1, 1) = 7;
  Image down = box_downsample(img, 2);
  CHECK(down.height == 1);
  CHECK(down.at(0, 0) == doctest::Approx(4.0));

  Image constant = Image(8, 8, 1);
  constant.pixels.fill(0.25);
  Image d2 = box_downsample(constant, 4);
  for (int i = 0; i < d2.pixels.size(); ++i) CHECK(d2.pixels[i] == doctest::Approx(0.25));

  CHECK_THROWS_AS(box_downsample(Image(6, 6, 1), 4), DimensionError);
}

TEST_CASE("nearest_upsample: replication and inverse composition") {
  Image img(1, 1, 1);
  img.at(0, 0) = 4.0;
  Image up = nearest_upsample(img, 2);
  CHECK(up.height == 2);
  for (int i = 0; i < 4; ++i) CHECK(up.pixels[i] == 4.0);

  RngStream rng(5);
  Image x = random_image(6, 6, 1, rng);
  Image same = nearest_upsample(x, 1);
  for (int i = 0; i < x.pixels.size(); ++i) CHECK(same.pixels[i] == x.pixels[i]);

  // box_downsample(nearest_upsample(x, k), k) == x exactly
  Image round = box_downsample(nearest_upsample(x, 3), 3);
  for (int i = 0; i < x.pixels.size(); ++i)
    CHECK(round.pixels[i] == doctest::Approx(x.pixels[i]).epsilon(1e-14));
}

TEST_CASE("nearest_upsample preserves block means") {
  RngStream rng(6);
  Image x = random_image(8, 8, 1, rng);
  Image up = nearest_upsample(x, 2);
  Image means = box_downsample(up, 2);
  for (int i = 0; i < x.pixels.size(); ++i)
    CHECK(means.pixels[i] == doctest::Approx(x.pixels[i]).epsilon(1e-14));
}

TEST_CASE("bicubic_upsample: constants, identity, affine ramp") {
  Image c(5, 7, 1);
  c.pixels.fill(0.3);
  Image up = bicubic_upsample(c, 13, 19);
  for (int i = 0; i < up.pixels.size(); ++i)
    CHECK(up.pixels[i] == doctest::Approx(0.3).epsilon(1e-12));

  RngStream rng(7);
  Image x = random_image(9, 9, 1, rng);
  Image same = bicubic_upsample(x, 9, 9);
  for (int i = 0; i < x.pixels.size(); ++i) CHECK(same.pixels[i] == x.pixels[i]);

  // analytic oracle: bicubic interpolation reproduces affine functions away
  // from the clamped border
  const int n = 16;
  Image ramp(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x2 = 0; x2 < n; ++x2) ramp.at(y, x2) = 0.03 * x2 - 0.02 * y;
  Image r2 = bicubic_upsample(ramp, 2 * n, 2 * n);
  for (int y = 4; y < 2 * n - 4; ++y)
    for (int x2 = 4; x2 < 2 * n - 4; ++x2) {
      double sx = (x2 + 0.5) * 0.5 - 0.5;
      double sy = (y + 0.5) * 0.5 - 0.5;
      double expected = 0.03 * sx - 0.02 * sy;
      CHECK(std::abs(r2.at(y, x2) - expected) < 1e-6);
    }

  CHECK_THROWS_AS(bicubic_upsample(x, 4, 9), DimensionError);
}

TEST_CASE("clamp_image") {
  Image img(1, 3, 1);
  img.pixels[0] = 1.5;
  img.pixels[1] = -2.0;
  img.pixels[2] = 0.5;
  Image out = clamp_image(img);
  CHECK(out.pixels[0] == 1.0);
  CHECK(out.pixels[1] == -1.0);
  CHECK(out.pixels[2] == 0.5);

  RngStream rng(8);
  Image in_range = random_image(4, 4, 1, rng);
  Image unchanged = clamp_image(in_range);
  for (int i = 0; i < in_range.pixels.size(); ++i)
    CHECK(unchanged.pixels[i] == in_range.pixels[i]);
}
