#include "prox/tensor.hpp"

#include <cmath>
#include <numbers>

namespace prox {

namespace {

size_t checked_size(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor shape entries must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(checked_size(shape_), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_size(shape_) != data_.size())
    throw DimensionError("tensor data length does not match shape");
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (checked_size(shape) != data_.size())
    throw DimensionError("reshape changes total size");
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) {
  std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::require_finite(const char* what) const {
  if (!all_finite())
    throw NumericalError(std::string("non-finite values in ") + what);
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("dot: shape mismatch");
  double s = 0.0;
  const double* pa = a.data();
  const double* pb = b.data();
  for (int i = 0; i < a.size(); ++i) s += pa[i] * pb[i];
  return s;
}

Tensor axpy(double alpha, const Tensor& x, const Tensor& y) {
  if (!x.same_shape(y)) throw DimensionError("axpy: shape mismatch");
  Tensor out = y;
  double* po = out.data();
  const double* px = x.data();
  for (int i = 0; i < x.size(); ++i) po[i] += alpha * px[i];
  return out;
}

double l2_norm(const Tensor& x) {
  return std::sqrt(dot(x, x));
}

double rmse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("rmse: shape mismatch");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / a.size());
}

Tensor operator+(const Tensor& a, const Tensor& b) { return axpy(1.0, a, b); }

Tensor operator-(const Tensor& a, const Tensor& b) { return axpy(-1.0, b, a); }

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (int i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

double RngStream::uniform() {
  // 53-bit mantissa; value in [0, 1).
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  if (!(lo < hi)) throw RangeError("uniform: lo must be < hi");
  return lo + (hi - lo) * uniform();
}

int RngStream::uniform_int(int n) {
  if (n < 1) throw ParameterError("uniform_int: n must be >= 1");
  return static_cast<int>(uniform() * n);
}

double RngStream::gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  // Box-Muller; u1 shifted into (0, 1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  cached_gaussian_ = r * std::sin(theta);
  has_cached_gaussian_ = true;
  return r * std::cos(theta);
}

Tensor RngStream::gaussian_vector(int n) {
  if (n < 1) throw ParameterError("gaussian_vector: n must be >= 1");
  Tensor t({n});
  for (int i = 0; i < n; ++i) t[i] = gaussian();
  return t;
}

Tensor RngStream::uniform_vector(double lo, double hi, int n) {
  if (!(lo < hi)) throw RangeError("uniform_vector: lo must be < hi");
  if (n < 1) throw ParameterError("uniform_vector: n must be >= 1");
  Tensor t({n});
  for (int i = 0; i < n; ++i) t[i] = lo + (hi - lo) * uniform();
  return t;
}

}  // namespace prox
