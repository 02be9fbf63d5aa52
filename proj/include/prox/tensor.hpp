#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "prox/errors.hpp"

namespace prox {

// Dense row-major tensor of 64-bit floats. All solver math runs in double;
// shapes are immutable after construction.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  const std::vector<int>& shape() const { return shape_; }
  int size() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double operator[](int i) const { return data_[static_cast<size_t>(i)]; }
  double& operator[](int i) { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Reinterprets the flat data with a new shape of identical total size.
  Tensor reshaped(std::vector<int> shape) const;

  void fill(double value);
  bool all_finite() const;
  // Throws NumericalError if any entry is NaN or Inf.
  void require_finite(const char* what) const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

// Inner product. Throws DimensionError on shape mismatch.
double dot(const Tensor& a, const Tensor& b);

// alpha*x + y elementwise. Throws DimensionError on shape mismatch.
Tensor axpy(double alpha, const Tensor& x, const Tensor& y);

// Euclidean norm.
double l2_norm(const Tensor& x);

// sqrt(mean((a-b)^2)); the convergence diagnostic used by the solver.
double rmse(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

// Deterministic random stream. Identical seeds yield bit-identical sample
// sequences; Gaussian values come from Box-Muller on the uniform stream.
// Single-owner: never share one stream across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi). Throws RangeError if lo >= hi.
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). Requires n >= 1.
  int uniform_int(int n);

  double gaussian();

  // n i.i.d. standard-normal samples. Requires n >= 1.
  Tensor gaussian_vector(int n);
  // n i.i.d. samples uniform in [lo, hi).
  Tensor uniform_vector(double lo, double hi, int n);

 private:
  std::mt19937_64 engine_;
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

}  // namespace prox
