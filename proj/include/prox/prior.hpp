#pragma once

#include <functional>
#include <memory>
#include <string>

#include "prox/tensor.hpp"

namespace prox {

struct ProjectionNetworkPair;  // nn.hpp

// Pluggable signal-prior step of the solver: maps a length-d vector v to a
// length-d estimate. The penalty weight rho is passed through; learned
// projectors ignore it (their prior weight is fixed by training).
struct ProxOperator {
  std::string name;
  std::function<Tensor(const Tensor& v, double rho)> apply;
};

ProxOperator identity_prox();

// Elementwise sign(v) * max(|v| - t, 0). Throws ParameterError for t < 0.
Tensor soft_threshold(const Tensor& v, double t);

// Soft-thresholding directly on pixels with threshold lambda / rho.
ProxOperator pixel_l1_prox(double lambda);

// l1 penalty on orthonormal Haar coefficients.
struct L1WaveletPrior {
  double lambda = 0.05;
  int levels = 2;
  int height = 0;
  int width = 0;
  int channels = 1;
};

// Exact prox of lambda*|Wx|_1: threshold the coefficients of v at lambda/rho
// and transform back. Throws DimensionError when v does not match the
// prior's geometry.
Tensor l1_wavelet_apply(const L1WaveletPrior& prior, const Tensor& v, double rho);

ProxOperator l1_wavelet_prox(const L1WaveletPrior& prior);

// Single forward pass of the trained projection network; output clamped to
// [-1, 1]. Throws StateError when the model has no frozen normalization
// statistics yet, DimensionError when v does not match the input geometry.
Tensor project_image(const ProjectionNetworkPair& model, const Tensor& v);

// Applies the projector to square patches of a larger image and stitches the
// results (later patches overwrite on overlap).
Tensor project_image_patchwise(const ProjectionNetworkPair& model, const Tensor& v, int height,
                               int width, int channels, int patch);

ProxOperator projector_prox(std::shared_ptr<const ProjectionNetworkPair> model);

ProxOperator patchwise_projector_prox(std::shared_ptr<const ProjectionNetworkPair> model,
                                      int height, int width, int channels, int patch);

}  // namespace prox
