#include "prox/prior.hpp"

#include <algorithm>
#include <cmath>

#include "prox/image.hpp"
#include "prox/nn.hpp"
#include "prox/wavelet.hpp"

namespace prox {

ProxOperator identity_prox() {
  return {"identity", [](const Tensor& v, double) { return v; }};
}

Tensor soft_threshold(const Tensor& v, double t) {
  if (t < 0.0) throw ParameterError("soft_threshold: threshold must be >= 0");
  Tensor out(v.shape());
  for (int i = 0; i < v.size(); ++i) {
    double a = std::abs(v[i]) - t;
    out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
  }
  return out;
}

ProxOperator pixel_l1_prox(double lambda) {
  if (lambda < 0.0) throw ParameterError("pixel_l1_prox: lambda must be >= 0");
  return {"pixel_l1",
          [lambda](const Tensor& v, double rho) { return soft_threshold(v, lambda / rho); }};
}

Tensor l1_wavelet_apply(const L1WaveletPrior& prior, const Tensor& v, double rho) {
  if (prior.lambda < 0.0) throw ParameterError("l1_wavelet: lambda must be >= 0");
  if (!(rho > 0.0)) throw ParameterError("l1_wavelet: rho must be > 0");
  if (v.size() != prior.height * prior.width * prior.channels)
    throw DimensionError("l1_wavelet: input does not match prior geometry");

  Image img = Image::from_tensor(v.reshaped({prior.height, prior.width, prior.channels}));
  WaveletCoeffs coeffs = haar_forward(img, prior.levels);
  const double t = prior.lambda / rho;
  map_coeffs(coeffs, [t](double c) {
    double a = std::abs(c) - t;
    return a > 0.0 ? std::copysign(a, c) : 0.0;
  });
  return haar_inverse(coeffs).pixels.reshaped(v.shape());
}

ProxOperator l1_wavelet_prox(const L1WaveletPrior& prior) {
  return {"l1_wavelet",
          [prior](const Tensor& v, double rho) { return l1_wavelet_apply(prior, v, rho); }};
}

Tensor project_image(const ProjectionNetworkPair& model, const Tensor& v) {
  if (!model.stats_ready())
    throw StateError("project_image: model has no frozen normalization statistics");
  if (v.size() != model.input_shape().size())
    throw DimensionError("project_image: input does not match network geometry");
  Tensor out = model.project(v);
  for (int i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], -1.0, 1.0);
  return out;
}

Tensor project_image_patchwise(const ProjectionNetworkPair& model, const Tensor& v, int height,
                               int width, int channels, int patch) {
  if (v.size() != height * width * channels)
    throw DimensionError("project_image_patchwise: input does not match geometry");
  Image img = Image::from_tensor(v.reshaped({height, width, channels}));
  auto [patches, grid] = extract_patches(img, patch);
  for (Image& p : patches)
    p.pixels = project_image(model, p.pixels);
  return stitch_patches(patches, grid).pixels.reshaped(v.shape());
}

ProxOperator projector_prox(std::shared_ptr<const ProjectionNetworkPair> model) {
  return {"projector",
          [model](const Tensor& v, double) { return project_image(*model, v); }};
}

ProxOperator patchwise_projector_prox(std::shared_ptr<const ProjectionNetworkPair> model,
                                      int height, int width, int channels, int patch) {
  return {"projector_patchwise", [model, height, width, channels, patch](const Tensor& v, double) {
            return project_image_patchwise(*model, v, height, width, channels, patch);
          }};
}

}  // namespace prox
