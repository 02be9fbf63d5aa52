#include "prox/linops.hpp"

#include <algorithm>
#include <cmath>

#include "prox/image.hpp"

namespace prox {

namespace {

LinearOperator dense_op(int m, int d, std::shared_ptr<const std::vector<double>> a) {
  LinearOperator op;
  op.in_dim = d;
  op.out_dim = m;
  op.matrix = a;
  op.forward = [m, d, a](const Tensor& x) {
    if (x.size() != d) throw DimensionError("operator forward: wrong input length");
    Tensor y({m});
    const double* px = x.data();
    for (int i = 0; i < m; ++i) {
      const double* row = a->data() + static_cast<size_t>(i) * d;
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += row[j] * px[j];
      y[i] = s;
    }
    return y;
  };
  op.adjoint = [m, d, a](const Tensor& y) {
    if (y.size() != m) throw DimensionError("operator adjoint: wrong input length");
    Tensor x({d});
    double* px = x.data();
    for (int i = 0; i < m; ++i) {
      const double* row = a->data() + static_cast<size_t>(i) * d;
      double yi = y[i];
      for (int j = 0; j < d; ++j) px[j] += row[j] * yi;
    }
    return x;
  };
  return op;
}

}  // namespace

LinearOperator gaussian_matrix_op(int d, double ratio, std::uint64_t seed) {
  if (d < 1) throw ParameterError("gaussian_matrix_op: d must be >= 1");
  if (!(ratio > 0.0) || ratio > 1.0)
    throw ParameterError("gaussian_matrix_op: ratio must be in (0, 1]");
  const int m = static_cast<int>(std::floor(ratio * d));
  if (m < 1) throw ParameterError("gaussian_matrix_op: ratio too small for d");

  RngStream rng(seed);
  auto a = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (double& v : *a) v = scale * rng.gaussian();
  return dense_op(m, d, std::move(a));
}

Tensor make_mask(const MaskSpec& spec, int h, int w, int c) {
  if (h < 1 || w < 1 || c < 1) throw ParameterError("make_mask: bad geometry");
  Tensor mask = Tensor::full({h * w * c}, 1.0);
  RngStream rng(spec.seed);

  auto drop_block = [&](int oy, int ox, int bh, int bw) {
    for (int y = oy; y < oy + bh; ++y)
      for (int x = ox; x < ox + bw; ++x)
        for (int ch = 0; ch < c; ++ch) mask[(y * w + x) * c + ch] = 0.0;
  };

  switch (spec.kind) {
    case MaskKind::kPixelwise: {
      if (spec.drop_rate < 0.0 || spec.drop_rate > 1.0)
        throw ParameterError("make_mask: drop_rate must be in [0, 1]");
      for (int p = 0; p < h * w; ++p) {
        bool kept = rng.uniform() >= spec.drop_rate;
        if (!kept)
          for (int ch = 0; ch < c; ++ch) mask[p * c + ch] = 0.0;
      }
      break;
    }
    case MaskKind::kScattered: {
      int side = static_cast<int>(std::lround(0.10 * std::min(h, w)));
      if (side < 1 || side > h || side > w)
        throw ParameterError("make_mask: scattered block does not fit image");
      for (int b = 0; b < 10; ++b) {
        int oy = rng.uniform_int(h - side + 1);
        int ox = rng.uniform_int(w - side + 1);
        drop_block(oy, ox, side, side);
      }
      break;
    }
    case MaskKind::kCenteredBlock: {
      int bh = static_cast<int>(std::lround(0.30 * h));
      int bw = static_cast<int>(std::lround(0.30 * w));
      if (bh < 1 || bw < 1 || bh > h || bw > w)
        throw ParameterError("make_mask: centered block does not fit image");
      drop_block((h - bh) / 2, (w - bw) / 2, bh, bw);
      break;
    }
  }
  return mask;
}

LinearOperator mask_op(const MaskSpec& spec, int h, int w, int c) {
  auto mask = std::make_shared<const Tensor>(make_mask(spec, h, w, c));
  const int d = h * w * c;
  auto apply = [mask, d](const Tensor& x) {
    if (x.size() != d) throw DimensionError("mask_op: wrong input length");
    Tensor y({d});
    for (int i = 0; i < d; ++i) y[i] = (*mask)[i] * x[i];
    return y;
  };
  LinearOperator op;
  op.in_dim = d;
  op.out_dim = d;
  op.forward = apply;
  op.adjoint = apply;
  return op;
}

LinearOperator box_downsample_op(int h, int w, int c, int factor) {
  if (factor < 1 || h % factor != 0 || w % factor != 0)
    throw DimensionError("box_downsample_op: factor must divide dimensions");
  const int oh = h / factor;
  const int ow = w / factor;
  const int d = h * w * c;
  const int m = oh * ow * c;
  const double inv = 1.0 / (factor * factor);

  LinearOperator op;
  op.in_dim = d;
  op.out_dim = m;
  op.forward = [=](const Tensor& x) {
    if (x.size() != d) throw DimensionError("box_downsample_op: wrong input length");
    Tensor y({m});
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          double s = 0.0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              s += x[((oy * factor + dy) * w + ox * factor + dx) * c + ch];
          y[(oy * ow + ox) * c + ch] = s * inv;
        }
    return y;
  };
  op.adjoint = [=](const Tensor& y) {
    if (y.size() != m) throw DimensionError("box_downsample_op: wrong adjoint length");
    Tensor x({d});
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          double v = y[(oy * ow + ox) * c + ch] * inv;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              x[((oy * factor + dy) * w + ox * factor + dx) * c + ch] = v;
        }
    return x;
  };
  return op;
}

LinearOperator identity_op(int d) {
  if (d < 1) throw ParameterError("identity_op: d must be >= 1");
  LinearOperator op;
  op.in_dim = d;
  op.out_dim = d;
  auto pass = [d](const Tensor& x) {
    if (x.size() != d) throw DimensionError("identity_op: wrong input length");
    return x;
  };
  op.forward = pass;
  op.adjoint = pass;
  return op;
}

double adjoint_check(const LinearOperator& op, int trials, std::uint64_t seed) {
  if (trials < 1) throw ParameterError("adjoint_check: trials must be >= 1");
  RngStream rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Tensor x = rng.gaussian_vector(op.in_dim);
    Tensor y = rng.gaussian_vector(op.out_dim);
    Tensor ax = op.forward(x);
    Tensor aty = op.adjoint(y);
    double lhs = dot(ax, y);
    double rhs = dot(x, aty);
    double denom = l2_norm(ax) * l2_norm(y) + 1e-30;
    worst = std::max(worst, std::abs(lhs - rhs) / denom);
  }
  return worst;
}

Tensor add_measurement_noise(const Tensor& y, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ParameterError("add_measurement_noise: sigma must be >= 0");
  if (sigma == 0.0) return y;
  RngStream rng(seed);
  Tensor out = y;
  for (int i = 0; i < out.size(); ++i) out[i] += sigma * rng.gaussian();
  return out;
}

LinearOperator resample_operator_entries(const LinearOperator& op, double fraction,
                                         std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ParameterError("resample_operator_entries: fraction must be in [0, 1]");
  if (!op.matrix)
    throw StateError("resample_operator_entries: operator is not materialized");

  auto a = std::make_shared<std::vector<double>>(*op.matrix);
  const size_t total = a->size();
  const size_t count = static_cast<size_t>(std::llround(fraction * total));

  RngStream rng(seed);
  // Partial Fisher-Yates picks `count` distinct entry indices.
  std::vector<std::uint32_t> idx(total);
  for (size_t i = 0; i < total; ++i) idx[i] = static_cast<std::uint32_t>(i);
  const double scale = 1.0 / std::sqrt(static_cast<double>(op.out_dim));
  for (size_t i = 0; i < count; ++i) {
    size_t j = i + static_cast<size_t>(rng.uniform() * (total - i));
    std::swap(idx[i], idx[j]);
    (*a)[idx[i]] = scale * rng.gaussian();
  }
  return dense_op(op.out_dim, op.in_dim, std::move(a));
}

LinearOperator build_operator(const OperatorSpec& spec) {
  if (spec.kind == "gaussian")
    return gaussian_matrix_op(spec.height * spec.width * spec.channels, spec.ratio, spec.seed);
  if (spec.kind == "identity")
    return identity_op(spec.height * spec.width * spec.channels);
  if (spec.kind == "box_downsample")
    return box_downsample_op(spec.height, spec.width, spec.channels, spec.factor);
  if (spec.kind == "mask_pixelwise")
    return mask_op({MaskKind::kPixelwise, spec.drop_rate, spec.seed}, spec.height, spec.width,
                   spec.channels);
  if (spec.kind == "mask_scattered")
    return mask_op({MaskKind::kScattered, 0.0, spec.seed}, spec.height, spec.width, spec.channels);
  if (spec.kind == "mask_block")
    return mask_op({MaskKind::kCenteredBlock, 0.0, spec.seed}, spec.height, spec.width,
                   spec.channels);
  throw ParameterError("build_operator: unknown kind '" + spec.kind + "'");
}

std::map<std::string, std::string> to_key_values(const OperatorSpec& spec) {
  std::map<std::string, std::string> kv;
  kv["kind"] = spec.kind;
  kv["height"] = std::to_string(spec.height);
  kv["width"] = std::to_string(spec.width);
  kv["channels"] = std::to_string(spec.channels);
  kv["ratio"] = std::to_string(spec.ratio);
  kv["drop_rate"] = std::to_string(spec.drop_rate);
  kv["factor"] = std::to_string(spec.factor);
  kv["seed"] = std::to_string(spec.seed);
  return kv;
}

OperatorSpec operator_spec_from_key_values(const std::map<std::string, std::string>& kv) {
  OperatorSpec spec;
  for (const auto& [key, value] : kv) {
    if (key == "kind") spec.kind = value;
    else if (key == "height") spec.height = std::stoi(value);
    else if (key == "width") spec.width = std::stoi(value);
    else if (key == "channels") spec.channels = std::stoi(value);
    else if (key == "ratio") spec.ratio = std::stod(value);
    else if (key == "drop_rate") spec.drop_rate = std::stod(value);
    else if (key == "factor") spec.factor = std::stoi(value);
    else if (key == "seed") spec.seed = std::stoull(value);
    else throw ConfigError("operator spec: unknown key '" + key + "'");
  }
  if (spec.kind.empty()) throw ConfigError("operator spec: missing kind");
  return spec;
}

}  // namespace prox
