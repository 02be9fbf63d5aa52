#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>

#include "prox/tensor.hpp"

namespace prox {

// Measurement operator: forward maps length-in_dim vectors to length-out_dim
// measurements, adjoint the reverse. Immutable after construction and safe to
// share across concurrent solves. `matrix` holds the dense row-major
// [out_dim x in_dim] entries when the operator is materialized.
struct LinearOperator {
  int in_dim = 0;
  int out_dim = 0;
  std::function<Tensor(const Tensor&)> forward;
  std::function<Tensor(const Tensor&)> adjoint;
  std::shared_ptr<const std::vector<double>> matrix;
};

enum class MaskKind { kPixelwise, kScattered, kCenteredBlock };

struct MaskSpec {
  MaskKind kind = MaskKind::kPixelwise;
  double drop_rate = 0.5;      // pixelwise only
  std::uint64_t seed = 0;
};

// Dense m x d matrix with i.i.d. N(0, 1/m) entries, m = floor(ratio * d).
LinearOperator gaussian_matrix_op(int d, double ratio, std::uint64_t seed);

// 0/1 mask as a flat [h*w*c] tensor. Pixelwise masks drop whole pixels
// (all channels together); scattered masks zero 10 blocks with side
// round(0.10 * min(h, w)); the centered block has side round(0.30 * dim)
// per dimension.
Tensor make_mask(const MaskSpec& spec, int h, int w, int c);

// Diagonal 0/1 projection (self-adjoint, idempotent).
LinearOperator mask_op(const MaskSpec& spec, int h, int w, int c);

// Forward is the block mean of imagery's box_downsample; adjoint spreads each
// measurement uniformly scaled by 1/factor^2.
LinearOperator box_downsample_op(int h, int w, int c, int factor);

LinearOperator identity_op(int d);

// Max over random (x, y) pairs of |<Ax,y> - <x,A'y>| / (|Ax||y| + eps).
double adjoint_check(const LinearOperator& op, int trials, std::uint64_t seed);

// y + sigma * n with n standard normal.
Tensor add_measurement_noise(const Tensor& y, double sigma, std::uint64_t seed);

// Redraws round(fraction * m * d) distinct entries of a materialized Gaussian
// operator from N(0, 1/m); the remaining entries are copied bit-identically.
LinearOperator resample_operator_entries(const LinearOperator& op, double fraction,
                                         std::uint64_t seed);

// Flat key-value description of an operator, round-trippable through the
// config file format.
struct OperatorSpec {
  std::string kind;  // gaussian | mask_pixelwise | mask_scattered | mask_block |
                     // box_downsample | identity
  int height = 0;
  int width = 0;
  int channels = 1;
  double ratio = 0.3;
  double drop_rate = 0.5;
  int factor = 2;
  std::uint64_t seed = 0;
};

LinearOperator build_operator(const OperatorSpec& spec);
std::map<std::string, std::string> to_key_values(const OperatorSpec& spec);
OperatorSpec operator_spec_from_key_values(const std::map<std::string, std::string>& kv);

}  // namespace prox
