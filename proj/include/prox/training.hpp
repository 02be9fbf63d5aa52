#pragma once

#include <utility>
#include <vector>

#include "prox/image.hpp"
#include "prox/nn.hpp"

namespace prox {

struct PerturbationConfig {
  double mask_weight_lo = 0.05;
  double mask_weight_hi = 0.5;
  int low_res_mask_side = 4;
  double smooth_ratio_lo = 0.2;
  double smooth_ratio_hi = 0.95;
  bool smoothing_enabled = false;
};

// Draws v ~ f(x): optional smoothing (downsample by a random ratio, then
// nearest-neighbor upsample back), then additive Gaussian noise with
// spatially varying strength given by a low-resolution weight mask
// bicubic-upsampled to image size. The result may leave [-1, 1].
Image perturb(const Image& img, const PerturbationConfig& cfg, RngStream& rng);

struct LossWeights {
  double clean_recon = 0.01;       // weight on |x - P(x)|^2
  double perturbed_recon = 1.0;    // weight on |x - P(v)|^2
  double projection_dist = 0.005;  // weight on |v - P(v)|^2
  double adv_latent = 0.0001;      // weight on -log sigma(D_l(E(v)))
  double adv_image = 0.001;        // weight on -log sigma(D(P(v)))
};

struct ProjectorLossTerms {
  double clean_recon = 0.0;
  double perturbed_recon = 0.0;
  double projection_dist = 0.0;
  double adv_latent = 0.0;
  double adv_image = 0.0;
  double total = 0.0;
};

// Per-sample projector objective. With accumulate_grads, gradients are
// accumulated into the projector (the classifiers also pick up transient
// gradients; their own steps re-zero them first).
ProjectorLossTerms projector_loss(ProjectionNetworkPair& projector, NetworkModel& image_cls,
                                  NetworkModel& latent_cls, const Tensor& x, const Tensor& v,
                                  const LossWeights& w, bool accumulate_grads);

// Binary cross-entropy on logits: positives toward sigma = 1, negatives
// toward sigma = 0. Returns the mean-per-class sum.
double classifier_loss(NetworkModel& cls, const std::vector<Tensor>& positives,
                       const std::vector<Tensor>& negatives, bool accumulate_grads);

struct TrainConfig {
  int batch_size = 32;
  long iterations = 2000;
  double lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double c_clip = 0.05;
  LossWeights weights;
  PerturbationConfig perturb;
  int eval_interval = 100;
  int patience = 20;  // consecutive non-improving evaluations before stopping
  double validation_fraction = 0.1;
  std::uint64_t training_seed = 3;
  std::uint64_t data_seed = 1;
  ProjectorArch arch;
};

struct StepMetrics {
  long iteration = 0;
  ProjectorLossTerms projector;
  double image_cls_loss = 0.0;
  double latent_cls_loss = 0.0;
};

struct TrainState {
  TrainConfig cfg;
  ProjectionNetworkPair projector;
  NetworkModel image_cls;
  NetworkModel latent_cls;
  AdamState opt_encoder, opt_decoder, opt_image_cls, opt_latent_cls;
  RngStream rng;  // perturbation draws
  long iteration = 0;

  explicit TrainState(const TrainConfig& cfg);

  // Recomputes all frozen normalization statistics from the reference images.
  void refresh_reference_stats(const std::vector<Tensor>& reference);
};

// One adversarial round: projector step, then image- and latent-classifier
// steps, each followed by weight truncation on the classifier.
StepMetrics train_step(TrainState& state, const std::vector<const Tensor*>& batch);

struct ValidationRecord {
  long iteration = 0;
  double loss = 0.0;
  // Largest input-gradient norm of the image classifier over a few probe
  // images; reported to track that weight truncation keeps it bounded.
  double classifier_grad_norm = 0.0;
};

struct TrainResult {
  ProjectionNetworkPair best;  // best-validation projector (final when no eval ran)
  std::vector<StepMetrics> metrics;
  std::vector<ValidationRecord> validation;
  long stopped_at = 0;
};

// Full loop with per-epoch reference-statistics refresh, seeded shuffling,
// periodic validation and early stopping.
TrainResult train(const std::vector<Tensor>& dataset, TrainState& state);

}  // namespace prox
