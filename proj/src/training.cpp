#include "prox/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace prox {

namespace {

Image nearest_resize(const Image& img, int out_h, int out_w) {
  if (out_h == img.height && out_w == img.width) return img;
  Image out(out_h, out_w, img.channels);
  for (int y = 0; y < out_h; ++y) {
    int sy = std::min(img.height - 1, static_cast<int>((y + 0.5) * img.height / out_h));
    for (int x = 0; x < out_w; ++x) {
      int sx = std::min(img.width - 1, static_cast<int>((x + 0.5) * img.width / out_w));
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// -log(sigma(t)), evaluated stably.
double neg_log_sigmoid(double t) {
  return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

double squared_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void scale_grads(NetworkModel& model, double factor) {
  for (Tensor* g : model.grads())
    for (int i = 0; i < g->size(); ++i) (*g)[i] *= factor;
}

}  // namespace

Image perturb(const Image& img, const PerturbationConfig& cfg, RngStream& rng) {
  if (cfg.low_res_mask_side < 2) throw ParameterError("perturb: mask side must be >= 2");
  if (cfg.mask_weight_lo > cfg.mask_weight_hi)
    throw ParameterError("perturb: invalid mask weight range");

  Image work = img;
  if (cfg.smoothing_enabled) {
    double r = cfg.smooth_ratio_lo == cfg.smooth_ratio_hi
                   ? cfg.smooth_ratio_lo
                   : rng.uniform(cfg.smooth_ratio_lo, cfg.smooth_ratio_hi);
    int th = std::max(1, static_cast<int>(std::lround(r * img.height)));
    int tw = std::max(1, static_cast<int>(std::lround(r * img.width)));
    if (th < img.height || tw < img.width)
      work = nearest_resize(nearest_resize(work, th, tw), img.height, img.width);
  }

  Image mask(cfg.low_res_mask_side, cfg.low_res_mask_side, 1);
  for (int i = 0; i < mask.pixels.size(); ++i)
    mask.pixels[i] = cfg.mask_weight_lo == cfg.mask_weight_hi
                         ? cfg.mask_weight_lo
                         : rng.uniform(cfg.mask_weight_lo, cfg.mask_weight_hi);
  Image weights = bicubic_upsample(mask, img.height, img.width);

  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double w = weights.at(y, x, 0);
      for (int c = 0; c < img.channels; ++c) work.at(y, x, c) += w * rng.gaussian();
    }
  return work;
}

ProjectorLossTerms projector_loss(ProjectionNetworkPair& projector, NetworkModel& image_cls,
                                  NetworkModel& latent_cls, const Tensor& x, const Tensor& v,
                                  const LossWeights& w, bool accumulate_grads) {
  NetworkModel& enc = projector.encoder;
  NetworkModel& dec = projector.decoder;
  ProjectorLossTerms terms;

  // clean pass: x -> P(x)
  Tensor px;
  if (accumulate_grads) {
    px = dec.forward(enc.forward(x, true), true);
  } else {
    px = dec.infer(enc.infer(x));
  }
  terms.clean_recon = squared_distance(x, px);
  if (accumulate_grads && w.clean_recon != 0.0) {
    Tensor g(px.shape());
    for (int i = 0; i < g.size(); ++i) g[i] = 2.0 * w.clean_recon * (px[i] - x[i]);
    enc.backward(dec.backward(g));
  }

  // perturbed pass: v -> latent -> P(v), with both adversarial heads
  const bool img_grad = accumulate_grads && w.adv_image != 0.0;
  const bool lat_grad = accumulate_grads && w.adv_latent != 0.0;
  Tensor latent, pv, logit_img, logit_lat;
  if (accumulate_grads) {
    latent = enc.forward(v, true);
    pv = dec.forward(latent, true);
  } else {
    latent = enc.infer(v);
    pv = dec.infer(latent);
  }
  logit_img = img_grad ? image_cls.forward(pv, true) : image_cls.infer(pv);
  logit_lat = lat_grad ? latent_cls.forward(latent, true) : latent_cls.infer(latent);

  terms.perturbed_recon = squared_distance(x, pv);
  terms.projection_dist = squared_distance(v, pv);
  terms.adv_latent = neg_log_sigmoid(logit_lat[0]);
  terms.adv_image = neg_log_sigmoid(logit_img[0]);
  terms.total = w.clean_recon * terms.clean_recon + w.perturbed_recon * terms.perturbed_recon +
                w.projection_dist * terms.projection_dist + w.adv_latent * terms.adv_latent +
                w.adv_image * terms.adv_image;

  if (accumulate_grads) {
    Tensor g_pv(pv.shape());
    for (int i = 0; i < g_pv.size(); ++i)
      g_pv[i] = 2.0 * w.perturbed_recon * (pv[i] - x[i]) +
                2.0 * w.projection_dist * (pv[i] - v[i]);
    if (img_grad) {
      Tensor gl({1, 1, 1});
      gl[0] = -w.adv_image * (1.0 - sigmoid(logit_img[0]));
      g_pv = g_pv + image_cls.backward(gl);
    }
    Tensor g_latent = dec.backward(g_pv);
    if (lat_grad) {
      Tensor gl({1, 1, 1});
      gl[0] = -w.adv_latent * (1.0 - sigmoid(logit_lat[0]));
      g_latent = g_latent + latent_cls.backward(gl);
    }
    enc.backward(g_latent);
  }
  return terms;
}

double classifier_loss(NetworkModel& cls, const std::vector<Tensor>& positives,
                       const std::vector<Tensor>& negatives, bool accumulate_grads) {
  double loss = 0.0;
  for (const Tensor& x : positives) {
    Tensor logit = accumulate_grads ? cls.forward(x, true) : cls.infer(x);
    loss += neg_log_sigmoid(logit[0]) / positives.size();
    if (accumulate_grads) {
      Tensor g({1, 1, 1});
      g[0] = -(1.0 - sigmoid(logit[0])) / positives.size();
      cls.backward(g);
    }
  }
  for (const Tensor& x : negatives) {
    Tensor logit = accumulate_grads ? cls.forward(x, true) : cls.infer(x);
    // -log(1 - sigma(t)) = t + log(1 + exp(-t))
    loss += (logit[0] + neg_log_sigmoid(logit[0])) / negatives.size();
    if (accumulate_grads) {
      Tensor g({1, 1, 1});
      g[0] = sigmoid(logit[0]) / negatives.size();
      cls.backward(g);
    }
  }
  return loss;
}

TrainState::TrainState(const TrainConfig& config)
    : cfg(config), rng(config.training_seed) {
  RngStream init_rng(config.training_seed);
  projector = build_projector(config.arch, init_rng);
  image_cls = build_image_classifier(config.arch.input, init_rng);
  latent_cls = build_latent_classifier(projector.latent_shape(), init_rng);
  opt_encoder.lr = opt_decoder.lr = opt_image_cls.lr = opt_latent_cls.lr = config.lr;
  opt_encoder.beta1 = opt_decoder.beta1 = opt_image_cls.beta1 = opt_latent_cls.beta1 =
      config.adam_beta1;
  opt_encoder.beta2 = opt_decoder.beta2 = opt_image_cls.beta2 = opt_latent_cls.beta2 =
      config.adam_beta2;
}

void TrainState::refresh_reference_stats(const std::vector<Tensor>& reference) {
  if (reference.empty()) throw ParameterError("refresh_reference_stats: empty reference batch");
  projector.encoder.update_reference_stats(reference);
  std::vector<Tensor> latents;
  latents.reserve(reference.size());
  for (const Tensor& t : reference) latents.push_back(projector.encoder.infer(t));
  projector.decoder.update_reference_stats(latents);
  image_cls.update_reference_stats(reference);
  latent_cls.update_reference_stats(latents);
}

StepMetrics train_step(TrainState& state, const std::vector<const Tensor*>& batch) {
  if (batch.empty()) throw ParameterError("train_step: empty batch");
  const int n = static_cast<int>(batch.size());
  const Shape3 in_shape = state.cfg.arch.input;

  std::vector<Tensor> perturbed;
  perturbed.reserve(n);
  for (const Tensor* x : batch) {
    Image img = Image::from_tensor(x->reshaped({in_shape.h, in_shape.w, in_shape.c}));
    perturbed.push_back(perturb(img, state.cfg.perturb, state.rng).pixels);
  }

  StepMetrics metrics;
  metrics.iteration = state.iteration;

  // projector step
  state.projector.encoder.zero_grads();
  state.projector.decoder.zero_grads();
  state.image_cls.zero_grads();
  state.latent_cls.zero_grads();
  for (int i = 0; i < n; ++i) {
    ProjectorLossTerms t = projector_loss(state.projector, state.image_cls, state.latent_cls,
                                          *batch[i], perturbed[i], state.cfg.weights, true);
    metrics.projector.clean_recon += t.clean_recon / n;
    metrics.projector.perturbed_recon += t.perturbed_recon / n;
    metrics.projector.projection_dist += t.projection_dist / n;
    metrics.projector.adv_latent += t.adv_latent / n;
    metrics.projector.adv_image += t.adv_image / n;
    metrics.projector.total += t.total / n;
  }
  if (!std::isfinite(metrics.projector.total))
    throw TrainingError("train_step: non-finite projector loss at iteration " +
                        std::to_string(state.iteration));
  scale_grads(state.projector.encoder, 1.0 / n);
  scale_grads(state.projector.decoder, 1.0 / n);
  adam_step(state.projector.encoder, state.opt_encoder);
  adam_step(state.projector.decoder, state.opt_decoder);

  // image classifier step: dataset images against current projections
  std::vector<Tensor> projected;
  projected.reserve(n);
  for (const Tensor& v : perturbed) projected.push_back(state.projector.project(v));
  std::vector<Tensor> clean;
  clean.reserve(n);
  for (const Tensor* x : batch) clean.push_back(*x);

  state.image_cls.zero_grads();
  metrics.image_cls_loss = classifier_loss(state.image_cls, clean, projected, true);
  adam_step(state.image_cls, state.opt_image_cls);
  clip_weights(state.image_cls, state.cfg.c_clip);

  // latent classifier step: encodings of clean images against encodings of
  // perturbed images
  std::vector<Tensor> latent_pos, latent_neg;
  latent_pos.reserve(n);
  latent_neg.reserve(n);
  for (const Tensor* x : batch) latent_pos.push_back(state.projector.encoder.infer(*x));
  for (const Tensor& v : perturbed) latent_neg.push_back(state.projector.encoder.infer(v));

  state.latent_cls.zero_grads();
  metrics.latent_cls_loss = classifier_loss(state.latent_cls, latent_pos, latent_neg, true);
  adam_step(state.latent_cls, state.opt_latent_cls);
  clip_weights(state.latent_cls, state.cfg.c_clip);

  if (!std::isfinite(metrics.image_cls_loss) || !std::isfinite(metrics.latent_cls_loss))
    throw TrainingError("train_step: non-finite classifier loss at iteration " +
                        std::to_string(state.iteration));

  state.iteration += 1;
  return metrics;
}

TrainResult train(const std::vector<Tensor>& dataset, TrainState& state) {
  if (dataset.empty()) throw ParameterError("train: empty dataset");
  const TrainConfig& cfg = state.cfg;

  TrainResult result;
  if (cfg.iterations <= 0) {
    result.best = state.projector;
    return result;
  }

  int n_val = static_cast<int>(std::lround(cfg.validation_fraction * dataset.size()));
  n_val = std::min<int>(n_val, static_cast<int>(dataset.size()) - 1);
  const int n_train = static_cast<int>(dataset.size()) - n_val;

  // fixed seeded reference batch for the normalization statistics
  RngStream data_rng(cfg.data_seed);
  const int ref_size = std::min(cfg.batch_size, n_train);
  std::vector<Tensor> reference;
  for (int i = 0; i < ref_size; ++i) reference.push_back(dataset[data_rng.uniform_int(n_train)]);

  const int batch = std::min(cfg.batch_size, n_train);
  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  bool have_best = false;
  int non_improving = 0;
  bool stop = false;

  while (!stop && state.iteration < cfg.iterations) {
    // epoch start: refresh frozen statistics, reshuffle
    state.refresh_reference_stats(reference);
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[i], order[data_rng.uniform_int(i + 1)]);

    for (int start = 0; start + batch <= n_train && !stop; start += batch) {
      std::vector<const Tensor*> items;
      items.reserve(batch);
      for (int i = 0; i < batch; ++i) items.push_back(&dataset[order[start + i]]);
      result.metrics.push_back(train_step(state, items));

      if (n_val > 0 && cfg.eval_interval > 0 && state.iteration % cfg.eval_interval == 0) {
        RngStream val_rng(cfg.training_seed ^ 0x5eedUL);
        double val = 0.0;
        for (int i = 0; i < n_val; ++i) {
          const Tensor& x = dataset[n_train + i];
          Image img = Image::from_tensor(
              x.reshaped({cfg.arch.input.h, cfg.arch.input.w, cfg.arch.input.c}));
          Tensor v = perturb(img, cfg.perturb, val_rng).pixels;
          val += projector_loss(state.projector, state.image_cls, state.latent_cls, x, v,
                                cfg.weights, false)
                     .total /
                 n_val;
        }
        // probe the classifier's input-gradient norm (truncation keeps it bounded)
        double grad_norm = 0.0;
        for (int i = 0; i < std::min(4, n_val); ++i) {
          state.image_cls.forward(dataset[n_train + i], true);
          state.image_cls.zero_grads();
          Tensor gin = state.image_cls.backward(Tensor::full({1, 1, 1}, 1.0));
          grad_norm = std::max(grad_norm, l2_norm(gin));
        }
        state.image_cls.zero_grads();
        result.validation.push_back({state.iteration, val, grad_norm});
        if (val < best_val) {
          best_val = val;
          result.best = state.projector;
          have_best = true;
          non_improving = 0;
        } else {
          non_improving += 1;
          if (non_improving > cfg.patience) stop = true;
        }
      }
      if (state.iteration >= cfg.iterations) stop = true;
    }
  }

  if (!have_best) result.best = state.projector;
  result.stopped_at = state.iteration;
  return result;
}

}  // namespace prox
