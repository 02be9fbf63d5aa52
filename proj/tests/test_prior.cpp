#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prox/image.hpp"
#include "prox/nn.hpp"
#include "prox/prior.hpp"
#include "prox/wavelet.hpp"

using namespace prox;

namespace {

// Small stats-primed projector for the network-prox contract tests.
ProjectionNetworkPair make_ready_projector(Shape3 input, RngStream& rng) {
  ProjectorArch arch;
  arch.input = input;
  arch.c1 = 2;
  arch.c2 = 3;
  arch.c3 = 4;
  ProjectionNetworkPair pair = build_projector(arch, rng);
  std::vector<Tensor> ref;
  for (int i = 0; i < 3; ++i) {
    Tensor t({input.h, input.w, input.c});
    for (int j = 0; j < t.size(); ++j) t[j] = rng.uniform(-1.0, 1.0);
    ref.push_back(std::move(t));
  }
  pair.encoder.update_reference_stats(ref);
  std::vector<Tensor> latents;
  for (const Tensor& t : ref) latents.push_back(pair.encoder.infer(t));
  pair.decoder.update_reference_stats(latents);
  return pair;
}

}  // namespace

TEST_CASE("soft_threshold: closed forms") {
  Tensor v({3}, {3.0, -0.5, 0.0});
  Tensor out = soft_threshold(v, 1.0);
  CHECK(out[0] == doctest::Approx(2.0));
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);

  Tensor z = soft_threshold(Tensor({5}), 0.7);
  for (int i = 0; i < 5; ++i) CHECK(z[i] == 0.0);

  CHECK_THROWS_AS(soft_threshold(v, -0.1), ParameterError);
}

TEST_CASE("soft_threshold is a contraction") {
  RngStream rng(1);
  for (int t = 0; t < 50; ++t) {
    Tensor a = rng.gaussian_vector(16);
    Tensor b = rng.gaussian_vector(16);
    double thr = rng.uniform(0.0, 2.0);
    CHECK(l2_norm(soft_threshold(a, thr) - soft_threshold(b, thr)) <=
          l2_norm(a - b) * (1.0 + 1e-12));
  }
}

TEST_CASE("l1_wavelet_prox: lambda 0 is the identity") {
  L1WaveletPrior prior;
  prior.lambda = 0.0;
  prior.levels = 2;
  prior.height = prior.width = 8;
  RngStream rng(2);
  Tensor v = rng.gaussian_vector(64);
  Tensor out = l1_wavelet_apply(prior, v, 0.5);
  for (int i = 0; i < 64; ++i) CHECK(out[i] == doctest::Approx(v[i]).epsilon(1e-12));
}

TEST_CASE("l1_wavelet_prox: constant image survives small thresholds") {
  L1WaveletPrior prior;
  prior.lambda = 0.1;
  prior.levels = 2;
  prior.height = prior.width = 8;
  Tensor v = Tensor::full({64}, 0.5);
  // Haar of a constant has zero detail; the LL magnitude is 0.5 * 2^levels = 2,
  // well above lambda/rho.
  Tensor out = l1_wavelet_apply(prior, v, 1.0);
  double expected = 0.5 - 0.1 / (1 << 2);  // threshold shrinks LL by lambda/rho / 2^levels
  for (int i = 0; i < 64; ++i) CHECK(out[i] == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("l1_wavelet_prox: matches the per-coefficient closed form via dense W") {
  const int n = 8;
  L1WaveletPrior prior;
  prior.lambda = 0.2;
  prior.levels = 2;
  prior.height = prior.width = n;
  const double rho = 0.7;

  RngStream rng(3);
  Tensor v = rng.gaussian_vector(n * n);

  // oracle: materialize W by transforming basis images, threshold each
  // coefficient of Wv in closed form, then synthesize with the dense
  // transpose (W is orthonormal).
  auto flatten = [&](const WaveletCoeffs& c) {
    std::vector<double> flat;
    for (const auto& band : c.bands)
      for (const Tensor* t : {&band.lh, &band.hl, &band.hh})
        for (int i = 0; i < t->size(); ++i) flat.push_back((*t)[i]);
    for (int i = 0; i < c.ll.size(); ++i) flat.push_back(c.ll[i]);
    return flat;
  };

  std::vector<std::vector<double>> w_rows;  // w_rows[k][j] = W[k][j]
  for (int j = 0; j < n * n; ++j) {
    Image basis(n, n, 1);
    basis.pixels[j] = 1.0;
    auto col = flatten(haar_forward(basis, prior.levels));
    if (w_rows.empty()) w_rows.resize(col.size());
    for (size_t k = 0; k < col.size(); ++k) w_rows[k].push_back(col[k]);
  }

  const double t = prior.lambda / rho;
  std::vector<double> coeff(w_rows.size());
  for (size_t k = 0; k < w_rows.size(); ++k) {
    double c = 0.0;
    for (int j = 0; j < n * n; ++j) c += w_rows[k][j] * v[j];
    double a = std::abs(c) - t;
    coeff[k] = a > 0.0 ? std::copysign(a, c) : 0.0;
  }
  Tensor expected({n * n});
  for (int j = 0; j < n * n; ++j) {
    double s = 0.0;
    for (size_t k = 0; k < w_rows.size(); ++k) s += w_rows[k][j] * coeff[k];
    expected[j] = s;
  }

  Tensor out = l1_wavelet_apply(prior, v, rho);
  for (int j = 0; j < n * n; ++j)
    CHECK(std::abs(out[j] - expected[j]) <= 1e-10);
}

TEST_CASE("l1_wavelet_prox is 1-Lipschitz") {
  L1WaveletPrior prior;
  prior.lambda = 0.3;
  prior.levels = 2;
  prior.height = prior.width = 8;
  RngStream rng(4);
  for (int t = 0; t < 20; ++t) {
    Tensor a = rng.gaussian_vector(64);
    Tensor b = rng.gaussian_vector(64);
    double da = l2_norm(l1_wavelet_apply(prior, a, 1.0) - l1_wavelet_apply(prior, b, 1.0));
    CHECK(da <= l2_norm(a - b) * (1.0 + 1e-12));
  }
}

TEST_CASE("l1_wavelet_prox: geometry errors") {
  L1WaveletPrior prior;
  prior.levels = 2;
  prior.height = prior.width = 8;
  CHECK_THROWS_AS(l1_wavelet_apply(prior, Tensor({63}), 1.0), DimensionError);
}

TEST_CASE("projector prox: contract checks") {
  RngStream rng(7);
  ProjectionNetworkPair pair = make_ready_projector({8, 8, 1}, rng);

  Tensor v = rng.uniform_vector(-1.5, 1.5, 64);  // solver iterates may leave [-1,1]
  Tensor out = project_image(pair, v);
  CHECK(out.size() == v.size());
  for (int i = 0; i < out.size(); ++i) {
    CHECK(out[i] <= 1.0);
    CHECK(out[i] >= -1.0);
  }

  // deterministic under frozen statistics
  Tensor again = project_image(pair, v);
  for (int i = 0; i < out.size(); ++i) CHECK(again[i] == out[i]);

  CHECK_THROWS_AS(project_image(pair, Tensor({63})), DimensionError);

  ProjectorArch arch;
  arch.input = {8, 8, 1};
  arch.c1 = 2;
  arch.c2 = 3;
  arch.c3 = 4;
  RngStream rng2(8);
  ProjectionNetworkPair untrained = build_projector(arch, rng2);
  CHECK_THROWS_AS(project_image(untrained, v), StateError);
}

TEST_CASE("patchwise projector: tiling matches standalone per-tile projection") {
  RngStream rng(9);
  ProjectionNetworkPair pair = make_ready_projector({8, 8, 1}, rng);

  // patch size equals the image: identical to a single call
  Tensor v8 = rng.uniform_vector(-1.0, 1.0, 64);
  Tensor whole = project_image(pair, v8);
  Tensor tiled = project_image_patchwise(pair, v8, 8, 8, 1, 8);
  for (int i = 0; i < 64; ++i) CHECK(tiled[i] == whole[i]);

  // 2x2 tiling of a 16x16 image: each tile equals its standalone projection
  Tensor v16 = rng.uniform_vector(-1.0, 1.0, 256);
  Tensor out = project_image_patchwise(pair, v16, 16, 16, 1, 8);
  Image img = Image::from_tensor(v16.reshaped({16, 16, 1}));
  auto [patches, grid] = extract_patches(img, 8);
  for (size_t p = 0; p < patches.size(); ++p) {
    Tensor expected = project_image(pair, patches[p].pixels);
    auto [oy, ox] = grid.origins[p];
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        CHECK(out[(oy + y) * 16 + ox + x] ==
              expected.reshaped({64})[y * 8 + x]);
  }

  // non-divisible dims: border-anchored tiling, full coverage, finite output
  Tensor v12 = rng.uniform_vector(-1.0, 1.0, 144);
  Tensor out12 = project_image_patchwise(pair, v12, 12, 12, 1, 8);
  CHECK(out12.size() == 144);
  CHECK(out12.all_finite());
  for (int i = 0; i < 144; ++i) {
    CHECK(out12[i] <= 1.0);
    CHECK(out12[i] >= -1.0);
  }
}
