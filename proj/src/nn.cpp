#include "prox/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace prox {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

Tensor Layer::forward(const Tensor& in) {
  cached_input_ = in;
  has_cache_ = true;
  return apply(in);
}

Tensor Layer::backward(const Tensor& grad_out) {
  if (!has_cache_) throw StateError("layer backward called without a cached forward");
  has_cache_ = false;
  return backward_impl(cached_input_, grad_out);
}

void Layer::update_reference_stats_batch(std::vector<Tensor>& batch) {
  for (auto& t : batch) t = apply(t);
}

namespace {

void check_input(const Tensor& in, Shape3 s, const char* what) {
  if (in.size() != s.size())
    throw DimensionError(std::string(what) + ": input length " + std::to_string(in.size()) +
                         " does not match geometry " + std::to_string(s.size()));
}

// ---------------------------------------------------------------- io helpers

void put_u8(std::ostream& o, std::uint8_t v) { o.put(static_cast<char>(v)); }

void put_u16(std::ostream& o, std::uint16_t v) {
  o.put(static_cast<char>(v & 0xff));
  o.put(static_cast<char>(v >> 8));
}

void put_u32(std::ostream& o, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) o.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::ostream& o, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(o, bits);
}

std::uint8_t get_u8(std::istream& i) {
  int c = i.get();
  if (c < 0) throw FormatError("model file truncated");
  return static_cast<std::uint8_t>(c);
}

std::uint16_t get_u16(std::istream& i) {
  std::uint16_t lo = get_u8(i);
  return static_cast<std::uint16_t>(lo | (get_u8(i) << 8));
}

std::uint32_t get_u32(std::istream& i) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(get_u8(i)) << (8 * k);
  return v;
}

float get_f32(std::istream& i) {
  std::uint32_t bits = get_u32(i);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void put_shape(std::ostream& o, Shape3 s) {
  put_u32(o, static_cast<std::uint32_t>(s.h));
  put_u32(o, static_cast<std::uint32_t>(s.w));
  put_u32(o, static_cast<std::uint32_t>(s.c));
}

Shape3 get_shape(std::istream& i) {
  Shape3 s;
  s.h = static_cast<int>(get_u32(i));
  s.w = static_cast<int>(get_u32(i));
  s.c = static_cast<int>(get_u32(i));
  return s;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

double he_gaussian(RngStream& rng, int fan_in) {
  return rng.gaussian() * std::sqrt(2.0 / std::max(1, fan_in));
}

// ------------------------------------------------------------------- layers

class ConvLayer : public Layer {
 public:
  ConvLayer(Shape3 in, int window, int out_channels, int stride)
      : in_(in), window_(window), stride_(stride) {
    if (window < 1 || stride < 1 || out_channels < 1)
      throw ParameterError("conv: window, stride and channels must be >= 1");
    out_ = {ceil_div(in.h, stride), ceil_div(in.w, stride), out_channels};
    pad_top_ = std::max(0, ((out_.h - 1) * stride + window - in.h)) / 2;
    pad_left_ = std::max(0, ((out_.w - 1) * stride + window - in.w)) / 2;
    kernel_ = Tensor({window, window, in.c, out_channels});
    bias_ = Tensor({out_channels});
    kernel_grad_ = Tensor(kernel_.shape());
    bias_grad_ = Tensor(bias_.shape());
  }

  void init_params(RngStream& rng) {
    for (int i = 0; i < kernel_.size(); ++i)
      kernel_[i] = he_gaussian(rng, window_ * window_ * in_.c);
  }

  LayerKind kind() const override { return LayerKind::kConv; }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return out_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvLayer>(*this); }

  Tensor apply(const Tensor& in) const override {
    check_input(in, in_, "conv");
    Tensor out({out_.h, out_.w, out_.c});
    const double* ip0 = in.data();
    double* op0 = out.data();
    const double* kp0 = kernel_.data();
    const double* bp = bias_.data();
    const int ic = in_.c, oc = out_.c;
    for (int oy = 0; oy < out_.h; ++oy) {
      for (int ox = 0; ox < out_.w; ++ox) {
        double* o = op0 + (oy * out_.w + ox) * oc;
        for (int co = 0; co < oc; ++co) o[co] = bp[co];
        const int by = oy * stride_ - pad_top_;
        const int bx = ox * stride_ - pad_left_;
        for (int ky = 0; ky < window_; ++ky) {
          const int y = by + ky;
          if (y < 0 || y >= in_.h) continue;
          for (int kx = 0; kx < window_; ++kx) {
            const int x = bx + kx;
            if (x < 0 || x >= in_.w) continue;
            const double* ip = ip0 + (y * in_.w + x) * ic;
            const double* kp = kp0 + (ky * window_ + kx) * ic * oc;
            for (int ci = 0; ci < ic; ++ci) {
              const double v = ip[ci];
              const double* kr = kp + ci * oc;
              for (int co = 0; co < oc; ++co) o[co] += v * kr[co];
            }
          }
        }
      }
    }
    return out;
  }

  std::vector<Tensor*> params() override { return {&kernel_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&kernel_grad_, &bias_grad_}; }

  void write_geometry(std::ostream& o) const override {
    put_shape(o, in_);
    put_u32(o, static_cast<std::uint32_t>(window_));
    put_u32(o, static_cast<std::uint32_t>(out_.c));
    put_u32(o, static_cast<std::uint32_t>(stride_));
  }

  static std::unique_ptr<ConvLayer> read_geometry(std::istream& i) {
    Shape3 in = get_shape(i);
    int window = static_cast<int>(get_u32(i));
    int out_c = static_cast<int>(get_u32(i));
    int stride = static_cast<int>(get_u32(i));
    return std::make_unique<ConvLayer>(in, window, out_c, stride);
  }

 protected:
  Tensor backward_impl(const Tensor& in, const Tensor& g) override {
    check_input(g, out_, "conv backward");
    Tensor gin({in_.h, in_.w, in_.c});
    const double* ip0 = in.data();
    const double* gp0 = g.data();
    double* gip0 = gin.data();
    const double* kp0 = kernel_.data();
    double* kgp0 = kernel_grad_.data();
    double* bgp = bias_grad_.data();
    const int ic = in_.c, oc = out_.c;
    for (int oy = 0; oy < out_.h; ++oy) {
      for (int ox = 0; ox < out_.w; ++ox) {
        const double* gp = gp0 + (oy * out_.w + ox) * oc;
        for (int co = 0; co < oc; ++co) bgp[co] += gp[co];
        const int by = oy * stride_ - pad_top_;
        const int bx = ox * stride_ - pad_left_;
        for (int ky = 0; ky < window_; ++ky) {
          const int y = by + ky;
          if (y < 0 || y >= in_.h) continue;
          for (int kx = 0; kx < window_; ++kx) {
            const int x = bx + kx;
            if (x < 0 || x >= in_.w) continue;
            const double* ip = ip0 + (y * in_.w + x) * ic;
            double* gip = gip0 + (y * in_.w + x) * ic;
            const double* kp = kp0 + (ky * window_ + kx) * ic * oc;
            double* kgp = kgp0 + (ky * window_ + kx) * ic * oc;
            for (int ci = 0; ci < ic; ++ci) {
              const double v = ip[ci];
              const double* kr = kp + ci * oc;
              double* kgr = kgp + ci * oc;
              double s = 0.0;
              for (int co = 0; co < oc; ++co) {
                const double gv = gp[co];
                kgr[co] += v * gv;
                s += kr[co] * gv;
              }
              gip[ci] += s;
            }
          }
        }
      }
    }
    return gin;
  }

 private:
  Shape3 in_, out_;
  int window_, stride_;
  int pad_top_ = 0, pad_left_ = 0;
  Tensor kernel_, bias_, kernel_grad_, bias_grad_;
};

class DconvLayer : public Layer {
 public:
  DconvLayer(Shape3 in, int window, int out_channels, int stride)
      : in_(in), window_(window), stride_(stride) {
    if (window < 1 || stride < 1 || out_channels < 1)
      throw ParameterError("dconv: window, stride and channels must be >= 1");
    if (window < stride) throw ParameterError("dconv: window must be >= stride");
    out_ = {in.h * stride, in.w * stride, out_channels};
    // Mirror of the matching conv's symmetric padding, so shapes invert.
    pad_top_ = (window - stride) / 2;
    pad_left_ = (window - stride) / 2;
    kernel_ = Tensor({window, window, in.c, out_channels});
    bias_ = Tensor({out_channels});
    kernel_grad_ = Tensor(kernel_.shape());
    bias_grad_ = Tensor(bias_.shape());
  }

  void init_params(RngStream& rng) {
    int fan_in = window_ * window_ * in_.c / (stride_ * stride_);
    for (int i = 0; i < kernel_.size(); ++i) kernel_[i] = he_gaussian(rng, fan_in);
  }

  LayerKind kind() const override { return LayerKind::kDconv; }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return out_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DconvLayer>(*this); }

  Tensor apply(const Tensor& in) const override {
    check_input(in, in_, "dconv");
    Tensor out({out_.h, out_.w, out_.c});
    const int ic = in_.c, oc = out_.c;
    double* op0 = out.data();
    const double* bp = bias_.data();
    for (int p = 0; p < out_.h * out_.w; ++p)
      for (int co = 0; co < oc; ++co) op0[p * oc + co] = bp[co];
    const double* ip0 = in.data();
    const double* kp0 = kernel_.data();
    for (int iy = 0; iy < in_.h; ++iy) {
      for (int ix = 0; ix < in_.w; ++ix) {
        const double* ip = ip0 + (iy * in_.w + ix) * ic;
        const int by = iy * stride_ - pad_top_;
        const int bx = ix * stride_ - pad_left_;
        for (int ky = 0; ky < window_; ++ky) {
          const int y = by + ky;
          if (y < 0 || y >= out_.h) continue;
          for (int kx = 0; kx < window_; ++kx) {
            const int x = bx + kx;
            if (x < 0 || x >= out_.w) continue;
            double* o = op0 + (y * out_.w + x) * oc;
            const double* kp = kp0 + (ky * window_ + kx) * ic * oc;
            for (int ci = 0; ci < ic; ++ci) {
              const double v = ip[ci];
              const double* kr = kp + ci * oc;
              for (int co = 0; co < oc; ++co) o[co] += v * kr[co];
            }
          }
        }
      }
    }
    return out;
  }

  std::vector<Tensor*> params() override { return {&kernel_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&kernel_grad_, &bias_grad_}; }

  void write_geometry(std::ostream& o) const override {
    put_shape(o, in_);
    put_u32(o, static_cast<std::uint32_t>(window_));
    put_u32(o, static_cast<std::uint32_t>(out_.c));
    put_u32(o, static_cast<std::uint32_t>(stride_));
  }

  static std::unique_ptr<DconvLayer> read_geometry(std::istream& i) {
    Shape3 in = get_shape(i);
    int window = static_cast<int>(get_u32(i));
    int out_c = static_cast<int>(get_u32(i));
    int stride = static_cast<int>(get_u32(i));
    return std::make_unique<DconvLayer>(in, window, out_c, stride);
  }

 protected:
  Tensor backward_impl(const Tensor& in, const Tensor& g) override {
    check_input(g, out_, "dconv backward");
    Tensor gin({in_.h, in_.w, in_.c});
    const int ic = in_.c, oc = out_.c;
    const double* gp0 = g.data();
    double* bgp = bias_grad_.data();
    for (int p = 0; p < out_.h * out_.w; ++p)
      for (int co = 0; co < oc; ++co) bgp[co] += gp0[p * oc + co];
    const double* ip0 = in.data();
    double* gip0 = gin.data();
    const double* kp0 = kernel_.data();
    double* kgp0 = kernel_grad_.data();
    for (int iy = 0; iy < in_.h; ++iy) {
      for (int ix = 0; ix < in_.w; ++ix) {
        const double* ip = ip0 + (iy * in_.w + ix) * ic;
        double* gip = gip0 + (iy * in_.w + ix) * ic;
        const int by = iy * stride_ - pad_top_;
        const int bx = ix * stride_ - pad_left_;
        for (int ky = 0; ky < window_; ++ky) {
          const int y = by + ky;
          if (y < 0 || y >= out_.h) continue;
          for (int kx = 0; kx < window_; ++kx) {
            const int x = bx + kx;
            if (x < 0 || x >= out_.w) continue;
            const double* gp = gp0 + (y * out_.w + x) * oc;
            const double* kp = kp0 + (ky * window_ + kx) * ic * oc;
            double* kgp = kgp0 + (ky * window_ + kx) * ic * oc;
            for (int ci = 0; ci < ic; ++ci) {
              const double v = ip[ci];
              const double* kr = kp + ci * oc;
              double* kgr = kgp + ci * oc;
              double s = 0.0;
              for (int co = 0; co < oc; ++co) {
                const double gv = gp[co];
                kgr[co] += v * gv;
                s += kr[co] * gv;
              }
              gip[ci] += s;
            }
          }
        }
      }
    }
    return gin;
  }

 private:
  Shape3 in_, out_;
  int window_, stride_;
  int pad_top_ = 0, pad_left_ = 0;
  Tensor kernel_, bias_, kernel_grad_, bias_grad_;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(Shape3 in, int out_size) : in_(in), out_size_(out_size) {
    if (out_size < 1) throw ParameterError("dense: output size must be >= 1");
    weight_ = Tensor({out_size, in.size()});
    bias_ = Tensor({out_size});
    weight_grad_ = Tensor(weight_.shape());
    bias_grad_ = Tensor(bias_.shape());
  }

  void init_params(RngStream& rng) {
    for (int i = 0; i < weight_.size(); ++i) weight_[i] = he_gaussian(rng, in_.size());
  }

  LayerKind kind() const override { return LayerKind::kDense; }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return {1, 1, out_size_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

  Tensor apply(const Tensor& in) const override {
    check_input(in, in_, "dense");
    const int n = in_.size();
    Tensor out({1, 1, out_size_});
    for (int i = 0; i < out_size_; ++i) {
      const double* row = weight_.data() + static_cast<size_t>(i) * n;
      double s = bias_[i];
      for (int j = 0; j < n; ++j) s += row[j] * in[j];
      out[i] = s;
    }
    return out;
  }

  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&weight_grad_, &bias_grad_}; }

  void write_geometry(std::ostream& o) const override {
    put_shape(o, in_);
    put_u32(o, static_cast<std::uint32_t>(out_size_));
  }

  static std::unique_ptr<DenseLayer> read_geometry(std::istream& i) {
    Shape3 in = get_shape(i);
    int out = static_cast<int>(get_u32(i));
    return std::make_unique<DenseLayer>(in, out);
  }

 protected:
  Tensor backward_impl(const Tensor& in, const Tensor& g) override {
    if (g.size() != out_size_) throw DimensionError("dense backward: wrong grad length");
    const int n = in_.size();
    Tensor gin(in.shape());
    for (int i = 0; i < out_size_; ++i) {
      const double gv = g[i];
      bias_grad_[i] += gv;
      const double* row = weight_.data() + static_cast<size_t>(i) * n;
      double* grow = weight_grad_.data() + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        grow[j] += gv * in[j];
        gin[j] += row[j] * gv;
      }
    }
    return gin;
  }

 private:
  Shape3 in_;
  int out_size_;
  Tensor weight_, bias_, weight_grad_, bias_grad_;
};

class ChannelwiseDenseLayer : public Layer {
 public:
  explicit ChannelwiseDenseLayer(Shape3 in) : in_(in), positions_(in.h * in.w) {
    weight_ = Tensor({in.c, positions_, positions_});
    bias_ = Tensor({in.c, positions_});
    weight_grad_ = Tensor(weight_.shape());
    bias_grad_ = Tensor(bias_.shape());
  }

  void init_params(RngStream& rng) {
    const double scale = std::sqrt(1.0 / positions_);
    for (int i = 0; i < weight_.size(); ++i) weight_[i] = scale * rng.gaussian();
  }

  LayerKind kind() const override { return LayerKind::kChannelwiseDense; }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return in_; }
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ChannelwiseDenseLayer>(*this);
  }

  Tensor apply(const Tensor& in) const override {
    check_input(in, in_, "channelwise_dense");
    const int c = in_.c, p = positions_;
    Tensor out(in.shape());
    std::vector<double> chan(p);
    for (int ch = 0; ch < c; ++ch) {
      for (int q = 0; q < p; ++q) chan[q] = in[q * c + ch];
      const double* w0 = weight_.data() + static_cast<size_t>(ch) * p * p;
      const double* b0 = bias_.data() + static_cast<size_t>(ch) * p;
      for (int i = 0; i < p; ++i) {
        const double* row = w0 + static_cast<size_t>(i) * p;
        double s = b0[i];
        for (int q = 0; q < p; ++q) s += row[q] * chan[q];
        out[i * c + ch] = s;
      }
    }
    return out;
  }

  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&weight_grad_, &bias_grad_}; }

  void write_geometry(std::ostream& o) const override { put_shape(o, in_); }

  static std::unique_ptr<ChannelwiseDenseLayer> read_geometry(std::istream& i) {
    return std::make_unique<ChannelwiseDenseLayer>(get_shape(i));
  }

 protected:
  Tensor backward_impl(const Tensor& in, const Tensor& g) override {
    check_input(g, in_, "channelwise_dense backward");
    const int c = in_.c, p = positions_;
    Tensor gin(in.shape());
    std::vector<double> chan(p), gchan(p), gacc(p);
    for (int ch = 0; ch < c; ++ch) {
      for (int q = 0; q < p; ++q) {
        chan[q] = in[q * c + ch];
        gchan[q] = g[q * c + ch];
        gacc[q] = 0.0;
      }
      const double* w0 = weight_.data() + static_cast<size_t>(ch) * p * p;
      double* wg0 = weight_grad_.data() + static_cast<size_t>(ch) * p * p;
      double* bg0 = bias_grad_.data() + static_cast<size_t>(ch) * p;
      for (int i = 0; i < p; ++i) {
        const double gv = gchan[i];
        bg0[i] += gv;
        const double* row = w0 + static_cast<size_t>(i) * p;
        double* grow = wg0 + static_cast<size_t>(i) * p;
        for (int q = 0; q < p; ++q) {
          grow[q] += gv * chan[q];
          gacc[q] += row[q] * gv;
        }
      }
      for (int q = 0; q < p; ++q) gin[q * c + ch] = gacc[q];
    }
    return gin;
  }

 private:
  Shape3 in_;
  int positions_;
  Tensor weight_, bias_, weight_grad_, bias_grad_;
};

class EluLayer : public Layer {
 public:
  explicit EluLayer(Shape3 in) : in_(in) {}

  LayerKind kind() const override { return LayerKind::kElu; }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return in_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<EluLayer>(*this); }

  Tensor apply(const Tensor& in) const override {
    check_input(in, in_, "elu");
    Tensor out(in.shape());
    for (int i = 0; i < in.size(); ++i) out[i] = elu(in[i]);
    return out;
  }

  void write_geometry(std::ostream& o) const override { put_shape(o, in_); }

  static std::unique_ptr<EluLayer> read_geometry(std::istream& i) {
    return std::make_unique<EluLayer>(get_shape(i));
  }

 protected:
  Tensor backward_impl(const Tensor& in, const Tensor& g) override {
    Tensor gin(in.shape());
    for (int i = 0; i < in.size(); ++i)
      gin[i] = g[i] * (in[i] > 0.0 ? 1.0 : std::exp(in[i]));
    return gin;
  }

 private:
  Shape3 in_;
};

}  // namespace

// Reference-statistics normalization: per-channel mean/variance frozen from a
// seeded reference batch, with learned scale and shift.
class RefNormLayer : public Layer {
 public:
  explicit RefNormLayer(Shape3 in) : in_(in) {
    gamma_ = Tensor::full({in.c}, 1.0);
    beta_ = Tensor({in.c});
    gamma_grad_ = Tensor({in.c});
    beta_grad_ = Tensor({in.c});
    mean_ = Tensor({in.c});
    var_ = Tensor::full({in.c}, 1.0);
  }

  LayerKind kind() const override { return LayerKind::kRefNorm; }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return in_; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<RefNormLayer>(*this); }

  Tensor apply(const Tensor& in) const override {
    check_input(in, in_, "refnorm");
    if (!has_stats_)
      throw StateError("refnorm: reference statistics have not been computed");
    Tensor out(in.shape());
    const int c = in_.c;
    std::vector<double> scale(c), shift(c);
    for (int ch = 0; ch < c; ++ch) {
      double inv = 1.0 / std::sqrt(var_[ch] + kEps);
      scale[ch] = gamma_[ch] * inv;
      shift[ch] = beta_[ch] - mean_[ch] * scale[ch];
    }
    for (int i = 0; i < in.size(); ++i) {
      int ch = i % c;
      out[i] = in[i] * scale[ch] + shift[ch];
    }
    return out;
  }

  std::vector<Tensor*> params() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> grads() override { return {&gamma_grad_, &beta_grad_}; }

  void update_reference_stats_batch(std::vector<Tensor>& batch) override {
    if (batch.empty()) throw ParameterError("refnorm: empty reference batch");
    const int c = in_.c;
    mean_.fill(0.0);
    var_.fill(0.0);
    long per_channel = 0;
    for (const Tensor& t : batch) {
      check_input(t, in_, "refnorm stats");
      for (int i = 0; i < t.size(); ++i) mean_[i % c] += t[i];
      per_channel += t.size() / c;
    }
    for (int ch = 0; ch < c; ++ch) mean_[ch] /= per_channel;
    for (const Tensor& t : batch)
      for (int i = 0; i < t.size(); ++i) {
        double d = t[i] - mean_[i % c];
        var_[i % c] += d * d;
      }
    for (int ch = 0; ch < c; ++ch) var_[ch] /= per_channel;
    has_stats_ = true;
    for (auto& t : batch) t = apply(t);
  }

  bool stats_ready() const override { return has_stats_; }

  void set_stats(const Tensor& mean, const Tensor& var) {
    if (mean.size() != in_.c || var.size() != in_.c)
      throw DimensionError("refnorm: stats must have one entry per channel");
    mean_ = mean;
    var_ = var;
    has_stats_ = true;
  }

  void write_geometry(std::ostream& o) const override { put_shape(o, in_); }

  static std::unique_ptr<RefNormLayer> read_geometry(std::istream& i) {
    return std::make_unique<RefNormLayer>(get_shape(i));
  }

  void write_stats(std::ostream& o) const {
    put_u8(o, has_stats_ ? 1 : 0);
    for (int ch = 0; ch < in_.c; ++ch) put_f32(o, static_cast<float>(mean_[ch]));
    for (int ch = 0; ch < in_.c; ++ch) put_f32(o, static_cast<float>(var_[ch]));
  }

  void read_stats(std::istream& i) {
    has_stats_ = get_u8(i) != 0;
    for (int ch = 0; ch < in_.c; ++ch) mean_[ch] = get_f32(i);
    for (int ch = 0; ch < in_.c; ++ch) var_[ch] = get_f32(i);
  }

 protected:
  Tensor backward_impl(const Tensor& in, const Tensor& g) override {
    // Statistics are constants of the training step, so the input gradient
    // is a plain per-channel rescale.
    Tensor gin(in.shape());
    const int c = in_.c;
    std::vector<double> inv(c);
    for (int ch = 0; ch < c; ++ch) inv[ch] = 1.0 / std::sqrt(var_[ch] + kEps);
    for (int i = 0; i < in.size(); ++i) {
      int ch = i % c;
      double norm = (in[i] - mean_[ch]) * inv[ch];
      gamma_grad_[ch] += g[i] * norm;
      beta_grad_[ch] += g[i];
      gin[i] = g[i] * gamma_[ch] * inv[ch];
    }
    return gin;
  }

 private:
  static constexpr double kEps = 1e-5;
  Shape3 in_;
  Tensor gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor mean_, var_;
  bool has_stats_ = false;
};

namespace {

class BottleneckBlock : public Layer {
 public:
  BottleneckBlock(Shape3 in, BottleneckKind bkind) : in_(in), bkind_(bkind) {
    const int c = in.c;
    if (bkind == BottleneckKind::kSame) {
      const int mid = std::max(1, c / 4);
      branch_.add(std::make_unique<RefNormLayer>(in));
      branch_.add(std::make_unique<EluLayer>(in));
      branch_.add(std::make_unique<ConvLayer>(in, 1, mid, 1));
      Shape3 s{in.h, in.w, mid};
      branch_.add(std::make_unique<RefNormLayer>(s));
      branch_.add(std::make_unique<EluLayer>(s));
      branch_.add(std::make_unique<ConvLayer>(s, 3, mid, 1));
      branch_.add(std::make_unique<RefNormLayer>(s));
      branch_.add(std::make_unique<EluLayer>(s));
      branch_.add(std::make_unique<ConvLayer>(s, 1, c, 1));
      out_ = in;
    } else {
      const int out_c = bkind == BottleneckKind::kHalf ? 2 * c : c;
      const int mid = std::max(1, out_c / 4);
      pre_.add(std::make_unique<RefNormLayer>(in));
      pre_.add(std::make_unique<EluLayer>(in));
      shortcut_ = std::make_unique<ConvLayer>(in, 1, out_c, 2);
      branch_.add(std::make_unique<ConvLayer>(in, 1, mid, 2));
      Shape3 s{ceil_div(in.h, 2), ceil_div(in.w, 2), mid};
      branch_.add(std::make_unique<RefNormLayer>(s));
      branch_.add(std::make_unique<EluLayer>(s));
      branch_.add(std::make_unique<ConvLayer>(s, 3, mid, 1));
      branch_.add(std::make_unique<RefNormLayer>(s));
      branch_.add(std::make_unique<EluLayer>(s));
      branch_.add(std::make_unique<ConvLayer>(s, 1, out_c, 1));
      out_ = {s.h, s.w, out_c};
    }
  }

  BottleneckBlock(const BottleneckBlock& other)
      : in_(other.in_),
        out_(other.out_),
        bkind_(other.bkind_),
        pre_(other.pre_),
        branch_(other.branch_),
        shortcut_(other.shortcut_ ? other.shortcut_->clone() : nullptr) {}

  void init_params(RngStream& rng);

  LayerKind kind() const override { return LayerKind::kBottleneck; }
  Shape3 input_shape() const override { return in_; }
  Shape3 output_shape() const override { return out_; }
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<BottleneckBlock>(*this);
  }

  Tensor apply(const Tensor& in) const override {
    Tensor t = pre_.layer_count() ? pre_.infer(in) : in;
    Tensor sc = shortcut_ ? shortcut_->apply(t) : t;
    return branch_.infer(t) + sc;
  }

  Tensor forward(const Tensor& in) override {
    Tensor t = pre_.layer_count() ? pre_.forward(in, true) : in;
    Tensor sc = shortcut_ ? shortcut_->forward(t) : t;
    return branch_.forward(t, true) + sc;
  }

  Tensor backward(const Tensor& g) override {
    Tensor gt = branch_.backward(g);
    gt = gt + (shortcut_ ? shortcut_->backward(g) : g);
    return pre_.layer_count() ? pre_.backward(gt) : gt;
  }

  std::vector<Tensor*> params() override {
    std::vector<Tensor*> out = pre_.params();
    if (shortcut_)
      for (Tensor* t : shortcut_->params()) out.push_back(t);
    for (Tensor* t : branch_.params()) out.push_back(t);
    return out;
  }

  std::vector<Tensor*> grads() override {
    std::vector<Tensor*> out = pre_.grads();
    if (shortcut_)
      for (Tensor* t : shortcut_->grads()) out.push_back(t);
    for (Tensor* t : branch_.grads()) out.push_back(t);
    return out;
  }

  void update_reference_stats_batch(std::vector<Tensor>& batch) override;
  bool stats_ready() const override { return pre_.stats_ready() && branch_.stats_ready(); }

  void write_geometry(std::ostream& o) const override {
    put_u8(o, static_cast<std::uint8_t>(bkind_));
    put_shape(o, in_);
  }

  static std::unique_ptr<BottleneckBlock> read_geometry(std::istream& i) {
    auto bkind = static_cast<BottleneckKind>(get_u8(i));
    Shape3 in = get_shape(i);
    return std::make_unique<BottleneckBlock>(in, bkind);
  }

  void write_stats(std::ostream& o) const;
  void read_stats(std::istream& i);

 protected:
  Tensor backward_impl(const Tensor&, const Tensor&) override {
    throw StateError("bottleneck: composite backward_impl must not be called");
  }

 private:
  Shape3 in_, out_;
  BottleneckKind bkind_;
  NetworkModel pre_;     // vbn + elu shared by both paths (empty for kSame)
  NetworkModel branch_;
  std::unique_ptr<Layer> shortcut_;  // projection conv (null = identity)
};

void init_layer_params(Layer& layer, RngStream& rng) {
  switch (layer.kind()) {
    case LayerKind::kConv:
      static_cast<ConvLayer&>(layer).init_params(rng);
      break;
    case LayerKind::kDconv:
      static_cast<DconvLayer&>(layer).init_params(rng);
      break;
    case LayerKind::kDense:
      static_cast<DenseLayer&>(layer).init_params(rng);
      break;
    case LayerKind::kChannelwiseDense:
      static_cast<ChannelwiseDenseLayer&>(layer).init_params(rng);
      break;
    case LayerKind::kBottleneck:
      static_cast<BottleneckBlock&>(layer).init_params(rng);
      break;
    default:
      break;
  }
}

void init_model_params(NetworkModel& model, RngStream& rng) {
  for (size_t i = 0; i < model.layer_count(); ++i) init_layer_params(model.layer(i), rng);
}

void BottleneckBlock::init_params(RngStream& rng) {
  init_model_params(pre_, rng);
  if (shortcut_) init_layer_params(*shortcut_, rng);
  init_model_params(branch_, rng);
}

void BottleneckBlock::update_reference_stats_batch(std::vector<Tensor>& batch) {
  pre_.update_stats_and_transform(batch);
  std::vector<Tensor> shortcut_out;
  shortcut_out.reserve(batch.size());
  for (const Tensor& t : batch) shortcut_out.push_back(shortcut_ ? shortcut_->apply(t) : t);
  branch_.update_stats_and_transform(batch);
  for (size_t i = 0; i < batch.size(); ++i) batch[i] = batch[i] + shortcut_out[i];
}

void write_layer_stats(const Layer& layer, std::ostream& o) {
  if (layer.kind() == LayerKind::kRefNorm)
    static_cast<const RefNormLayer&>(layer).write_stats(o);
  else if (layer.kind() == LayerKind::kBottleneck)
    static_cast<const BottleneckBlock&>(layer).write_stats(o);
}

void read_layer_stats(Layer& layer, std::istream& i) {
  if (layer.kind() == LayerKind::kRefNorm)
    static_cast<RefNormLayer&>(layer).read_stats(i);
  else if (layer.kind() == LayerKind::kBottleneck)
    static_cast<BottleneckBlock&>(layer).read_stats(i);
}

void BottleneckBlock::write_stats(std::ostream& o) const {
  for (size_t i = 0; i < pre_.layer_count(); ++i) write_layer_stats(pre_.layer(i), o);
  for (size_t i = 0; i < branch_.layer_count(); ++i) write_layer_stats(branch_.layer(i), o);
}

void BottleneckBlock::read_stats(std::istream& i) {
  for (size_t k = 0; k < pre_.layer_count(); ++k) read_layer_stats(pre_.layer(k), i);
  for (size_t k = 0; k < branch_.layer_count(); ++k) read_layer_stats(branch_.layer(k), i);
}

std::unique_ptr<Layer> read_layer(std::istream& in) {
  auto kind = static_cast<LayerKind>(get_u8(in));
  switch (kind) {
    case LayerKind::kConv: return ConvLayer::read_geometry(in);
    case LayerKind::kDconv: return DconvLayer::read_geometry(in);
    case LayerKind::kDense: return DenseLayer::read_geometry(in);
    case LayerKind::kChannelwiseDense: return ChannelwiseDenseLayer::read_geometry(in);
    case LayerKind::kElu: return EluLayer::read_geometry(in);
    case LayerKind::kRefNorm: return RefNormLayer::read_geometry(in);
    case LayerKind::kBottleneck: return BottleneckBlock::read_geometry(in);
  }
  throw FormatError("model file: unknown layer kind");
}

}  // namespace

// ------------------------------------------------------------- layer makers

std::unique_ptr<Layer> make_conv(Shape3 in, int window, int out_channels, int stride,
                                 RngStream& rng) {
  auto l = std::make_unique<ConvLayer>(in, window, out_channels, stride);
  l->init_params(rng);
  return l;
}

std::unique_ptr<Layer> make_dconv(Shape3 in, int window, int out_channels, int stride,
                                  RngStream& rng) {
  auto l = std::make_unique<DconvLayer>(in, window, out_channels, stride);
  l->init_params(rng);
  return l;
}

std::unique_ptr<Layer> make_dense(Shape3 in, int out_size, RngStream& rng) {
  auto l = std::make_unique<DenseLayer>(in, out_size);
  l->init_params(rng);
  return l;
}

std::unique_ptr<Layer> make_channelwise_dense(Shape3 in, RngStream& rng) {
  auto l = std::make_unique<ChannelwiseDenseLayer>(in);
  l->init_params(rng);
  return l;
}

std::unique_ptr<Layer> make_elu_layer(Shape3 in) { return std::make_unique<EluLayer>(in); }

std::unique_ptr<Layer> make_refnorm(Shape3 in) { return std::make_unique<RefNormLayer>(in); }

std::unique_ptr<Layer> make_bottleneck(Shape3 in, BottleneckKind bkind, RngStream& rng) {
  auto l = std::make_unique<BottleneckBlock>(in, bkind);
  l->init_params(rng);
  return l;
}

// ------------------------------------------------------------- NetworkModel

NetworkModel::NetworkModel(const NetworkModel& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

NetworkModel& NetworkModel::operator=(const NetworkModel& other) {
  if (this != &other) {
    layers_.clear();
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

void NetworkModel::add(std::unique_ptr<Layer> layer) {
  if (!layers_.empty() &&
      layers_.back()->output_shape().size() != layer->input_shape().size())
    throw DimensionError("model: layer input does not match previous output");
  layers_.push_back(std::move(layer));
}

Tensor NetworkModel::forward(const Tensor& in, bool train) {
  if (!train) return infer(in);
  Tensor t = in;
  for (auto& l : layers_) t = l->forward(t);
  return t;
}

Tensor NetworkModel::infer(const Tensor& in) const {
  Tensor t = in;
  for (const auto& l : layers_) t = l->apply(t);
  return t;
}

Tensor NetworkModel::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Tensor*> NetworkModel::params() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* t : l->params()) out.push_back(t);
  return out;
}

std::vector<Tensor*> NetworkModel::grads() {
  std::vector<Tensor*> out;
  for (auto& l : layers_)
    for (Tensor* t : l->grads()) out.push_back(t);
  return out;
}

void NetworkModel::zero_grads() {
  for (Tensor* g : grads()) g->fill(0.0);
}

long NetworkModel::parameter_count() const {
  long n = 0;
  for (Tensor* t : const_cast<NetworkModel*>(this)->params()) n += t->size();
  return n;
}

Shape3 NetworkModel::input_shape() const {
  if (layers_.empty()) throw StateError("model has no layers");
  return layers_.front()->input_shape();
}

Shape3 NetworkModel::output_shape() const {
  if (layers_.empty()) throw StateError("model has no layers");
  return layers_.back()->output_shape();
}

void NetworkModel::update_reference_stats(const std::vector<Tensor>& reference_batch) {
  std::vector<Tensor> batch = reference_batch;
  update_stats_and_transform(batch);
}

void NetworkModel::update_stats_and_transform(std::vector<Tensor>& batch) {
  for (auto& l : layers_) l->update_reference_stats_batch(batch);
}

bool NetworkModel::stats_ready() const {
  for (const auto& l : layers_)
    if (!l->stats_ready()) return false;
  return true;
}

void clip_weights(NetworkModel& model, double c_clip) {
  if (!(c_clip > 0.0)) throw ParameterError("clip_weights: bound must be > 0");
  for (Tensor* p : model.params())
    for (int i = 0; i < p->size(); ++i) (*p)[i] = std::clamp((*p)[i], -c_clip, c_clip);
}

void adam_step(NetworkModel& model, AdamState& state) {
  auto params = model.params();
  auto grads = model.grads();
  size_t total = 0;
  for (Tensor* p : params) total += static_cast<size_t>(p->size());
  if (state.m.empty()) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
  }
  if (state.m.size() != total)
    throw StateError("adam_step: optimizer state does not match model");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  size_t k = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    for (int j = 0; j < p.size(); ++j, ++k) {
      state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g[j];
      state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g[j] * g[j];
      double mhat = state.m[k] / bc1;
      double vhat = state.v[k] / bc2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ----------------------------------------------------------------- builders

ProjectionNetworkPair build_projector(const ProjectorArch& arch, RngStream& rng) {
  const Shape3 in = arch.input;
  if (in.h % 2 != 0 || in.w % 2 != 0)
    throw ParameterError("build_projector: input dims must be even");

  ProjectionNetworkPair pair;
  NetworkModel& enc = pair.encoder;
  enc.add(make_conv(in, 4, arch.c1, 1, rng));
  Shape3 s1{in.h, in.w, arch.c1};
  enc.add(make_refnorm(s1));
  enc.add(make_elu_layer(s1));
  enc.add(make_conv(s1, 4, arch.c2, 2, rng));
  Shape3 s2{in.h / 2, in.w / 2, arch.c2};
  enc.add(make_refnorm(s2));
  enc.add(make_elu_layer(s2));
  enc.add(make_channelwise_dense(s2, rng));
  enc.add(make_conv(s2, 2, arch.c3, 1, rng));
  Shape3 latent{s2.h, s2.w, arch.c3};
  enc.add(make_refnorm(latent));
  enc.add(make_elu_layer(latent));

  NetworkModel& dec = pair.decoder;
  dec.add(make_dconv(latent, 2, arch.c2, 1, rng));
  dec.add(make_refnorm(s2));
  dec.add(make_elu_layer(s2));
  dec.add(make_dconv(s2, 4, arch.c1, 2, rng));
  dec.add(make_refnorm(s1));
  dec.add(make_elu_layer(s1));
  // Last layer stays linear so the projection distance is measured on raw
  // outputs.
  dec.add(make_dconv(s1, 4, in.c, 1, rng));
  return pair;
}

NetworkModel build_image_classifier(Shape3 input, RngStream& rng) {
  NetworkModel model;
  model.add(make_conv(input, 4, 8, 1, rng));
  Shape3 s{input.h, input.w, 8};
  model.add(make_bottleneck(s, BottleneckKind::kHalf, rng));
  s = {ceil_div(s.h, 2), ceil_div(s.w, 2), 16};
  model.add(make_bottleneck(s, BottleneckKind::kSame, rng));
  model.add(make_bottleneck(s, BottleneckKind::kHalf, rng));
  s = {ceil_div(s.h, 2), ceil_div(s.w, 2), 32};
  model.add(make_refnorm(s));
  model.add(make_elu_layer(s));
  model.add(make_dense(s, 1, rng));
  return model;
}

NetworkModel build_latent_classifier(Shape3 input, RngStream& rng) {
  NetworkModel model;
  model.add(make_bottleneck(input, BottleneckKind::kSame, rng));
  model.add(make_bottleneck(input, BottleneckKind::kQuarter, rng));
  Shape3 s{ceil_div(input.h, 2), ceil_div(input.w, 2), input.c};
  model.add(make_bottleneck(s, BottleneckKind::kSame, rng));
  model.add(make_refnorm(s));
  model.add(make_elu_layer(s));
  model.add(make_dense(s, 1, rng));
  return model;
}

// ------------------------------------------------------------ serialization

void save_models(std::ostream& out, const std::vector<const NetworkModel*>& models) {
  out.write("PRXA", 4);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(models.size()));
  for (const NetworkModel* model : models) {
    put_u32(out, static_cast<std::uint32_t>(model->layer_count()));
    for (size_t i = 0; i < model->layer_count(); ++i) {
      const Layer& layer = model->layer(i);
      put_u8(out, static_cast<std::uint8_t>(layer.kind()));
      layer.write_geometry(out);
    }
  }
  for (const NetworkModel* model : models) {
    // Read-only traversal of the parameter tensors.
    auto params = const_cast<NetworkModel*>(model)->params();
    for (const Tensor* p : params)
      for (int i = 0; i < p->size(); ++i) put_f32(out, static_cast<float>((*p)[i]));
  }
  for (const NetworkModel* model : models)
    for (size_t i = 0; i < model->layer_count(); ++i) write_layer_stats(model->layer(i), out);
  if (!out) throw FormatError("model save failed");
}

std::vector<NetworkModel> load_models(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "PRXA", 4) != 0)
    throw FormatError("model file: bad magic");
  std::uint16_t version = get_u16(in);
  if (version != 1) throw FormatError("model file: unsupported version");

  std::uint32_t n_models = get_u32(in);
  if (n_models > 64) throw FormatError("model file: implausible model count");
  std::vector<NetworkModel> models(n_models);
  for (auto& model : models) {
    std::uint32_t n_layers = get_u32(in);
    if (n_layers > 4096) throw FormatError("model file: implausible layer count");
    for (std::uint32_t i = 0; i < n_layers; ++i) model.add(read_layer(in));
  }
  for (auto& model : models)
    for (Tensor* p : model.params())
      for (int i = 0; i < p->size(); ++i) (*p)[i] = get_f32(in);
  for (auto& model : models)
    for (size_t i = 0; i < model.layer_count(); ++i) read_layer_stats(model.layer(i), in);
  return models;
}

void save_projector(const std::string& path, const ProjectionNetworkPair& pair) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open model file for writing: " + path);
  save_models(out, {&pair.encoder, &pair.decoder});
}

ProjectionNetworkPair load_projector(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file: " + path);
  auto models = load_models(in);
  if (models.size() != 2) throw FormatError("projector file must contain two networks");
  ProjectionNetworkPair pair;
  pair.encoder = std::move(models[0]);
  pair.decoder = std::move(models[1]);
  return pair;
}

}  // namespace prox
