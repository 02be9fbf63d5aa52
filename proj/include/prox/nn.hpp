#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "prox/tensor.hpp"

namespace prox {

// Exponential linear unit with alpha = 1.
double elu(double x);

struct Shape3 {
  int h = 0;
  int w = 0;
  int c = 0;
  int size() const { return h * w * c; }
  bool operator==(const Shape3&) const = default;
};

enum class LayerKind : std::uint8_t {
  kConv = 1,
  kDconv = 2,
  kDense = 3,
  kChannelwiseDense = 4,
  kElu = 5,
  kRefNorm = 6,
  kBottleneck = 7,
};

enum class BottleneckKind : std::uint8_t { kSame = 0, kHalf = 1, kQuarter = 2 };

class RefNormLayer;

// One differentiable stage. forward() caches what backward() needs; backward()
// consumes the cache, accumulates parameter gradients and returns the input
// gradient. apply() is the pure inference path.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape3 input_shape() const = 0;
  virtual Shape3 output_shape() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;

  virtual Tensor apply(const Tensor& in) const = 0;
  virtual Tensor forward(const Tensor& in);
  virtual Tensor backward(const Tensor& grad_out);

  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }

  // Freezes normalization statistics from a reference batch while advancing
  // the batch through this layer. Default: plain transform.
  virtual void update_reference_stats_batch(std::vector<Tensor>& batch);
  virtual bool stats_ready() const { return true; }

  virtual void write_geometry(std::ostream& out) const = 0;

 protected:
  virtual Tensor backward_impl(const Tensor& in, const Tensor& grad_out) = 0;

  Tensor cached_input_;
  bool has_cache_ = false;
};

// Strided convolution with symmetric (SAME-style) padding: the output spatial
// size is ceil(in / stride), so conv(w,c,s) and dconv(w,c,s) are shape-inverse.
std::unique_ptr<Layer> make_conv(Shape3 in, int window, int out_channels, int stride,
                                 RngStream& rng);
// Transposed convolution: output spatial size is in * stride.
std::unique_ptr<Layer> make_dconv(Shape3 in, int window, int out_channels, int stride,
                                  RngStream& rng);
std::unique_ptr<Layer> make_dense(Shape3 in, int out_size, RngStream& rng);
// Per-channel fully connected map across spatial positions; output dimension
// equals the input dimension.
std::unique_ptr<Layer> make_channelwise_dense(Shape3 in, RngStream& rng);
std::unique_ptr<Layer> make_elu_layer(Shape3 in);
// Per-channel normalization with learned scale/shift; the mean/variance come
// from a frozen reference batch, so inference is deterministic.
std::unique_ptr<Layer> make_refnorm(Shape3 in);
// Pre-activation bottleneck residual unit. kSame keeps dimensions with an
// identity shortcut; kHalf halves the spatial size and doubles the channels;
// kQuarter halves the spatial size at constant channels.
std::unique_ptr<Layer> make_bottleneck(Shape3 in, BottleneckKind bkind, RngStream& rng);

class NetworkModel {
 public:
  NetworkModel() = default;
  NetworkModel(const NetworkModel& other);
  NetworkModel& operator=(const NetworkModel& other);
  NetworkModel(NetworkModel&&) = default;
  NetworkModel& operator=(NetworkModel&&) = default;

  void add(std::unique_ptr<Layer> layer);

  Tensor forward(const Tensor& in, bool train = false);
  Tensor infer(const Tensor& in) const;
  Tensor backward(const Tensor& grad_out);

  std::vector<Tensor*> params();
  std::vector<Tensor*> grads();
  void zero_grads();
  long parameter_count() const;

  Shape3 input_shape() const;
  Shape3 output_shape() const;
  size_t layer_count() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }
  const Layer& layer(size_t i) const { return *layers_[i]; }

  // Recomputes every normalization layer's statistics from the given batch.
  void update_reference_stats(const std::vector<Tensor>& reference_batch);
  // Same, but advances the batch through the model (used by composite layers).
  void update_stats_and_transform(std::vector<Tensor>& batch);
  bool stats_ready() const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Clamps every parameter to [-c_clip, c_clip].
void clip_weights(NetworkModel& model, double c_clip);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

// One Adam update with bias correction, consuming the model's current grads.
void adam_step(NetworkModel& model, AdamState& state);

// Autoencoder projector: P = decoder(encoder(.)). The final decoder layer is
// linear (no squashing) and output spatial dims equal the input dims.
struct ProjectionNetworkPair {
  NetworkModel encoder;
  NetworkModel decoder;

  Tensor project(const Tensor& v) const { return decoder.infer(encoder.infer(v)); }
  bool stats_ready() const { return encoder.stats_ready() && decoder.stats_ready(); }
  Shape3 input_shape() const { return encoder.input_shape(); }
  Shape3 latent_shape() const { return encoder.output_shape(); }
};

struct ProjectorArch {
  Shape3 input{28, 28, 1};
  int c1 = 16;  // stride-1 stem channels
  int c2 = 32;  // stride-2 stage channels (also the channelwise-dense stage)
  int c3 = 64;  // latent channels
};

ProjectionNetworkPair build_projector(const ProjectorArch& arch, RngStream& rng);

// Residual classifier over images ending in a single logit.
NetworkModel build_image_classifier(Shape3 input, RngStream& rng);
// Smaller residual classifier over the projector's latent space.
NetworkModel build_latent_classifier(Shape3 input, RngStream& rng);

// "PRXA" container: little-endian, u16 format version, layer table followed
// by parameters as 32-bit floats, reference statistics appended.
void save_models(std::ostream& out, const std::vector<const NetworkModel*>& models);
std::vector<NetworkModel> load_models(std::istream& in);

void save_projector(const std::string& path, const ProjectionNetworkPair& pair);
ProjectionNetworkPair load_projector(const std::string& path);

}  // namespace prox
