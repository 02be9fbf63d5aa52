#include "prox/checks.hpp"

#include <algorithm>
#include <cmath>

#include "prox/linops.hpp"
#include "prox/solver.hpp"
#include "prox/training.hpp"
#include "prox/wavelet.hpp"

namespace prox {

namespace {

Tensor random_tensor(Shape3 s, RngStream& rng) {
  Tensor t({s.h, s.w, s.c});
  for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Worst finite-difference mismatch over all (or every step-th) parameter and
// all input entries of <model(in), r>.
double fd_worst_error(NetworkModel& model, const Tensor& in, int param_step = 1) {
  RngStream rng(991);
  Tensor out = model.forward(in, true);
  Tensor r(out.shape());
  for (int i = 0; i < r.size(); ++i) r[i] = rng.gaussian();

  model.zero_grads();
  Tensor gin = model.backward(r);

  const double h = 1e-5;
  auto loss = [&]() { return dot(model.infer(in), r); };
  double worst = 0.0;

  auto params = model.params();
  auto grads = model.grads();
  for (size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    for (int i = 0; i < p.size(); i += param_step) {
      double saved = p[i];
      p[i] = saved + h;
      double lp = loss();
      p[i] = saved - h;
      double lm = loss();
      p[i] = saved;
      worst = std::max(worst, relative_error((lp - lm) / (2 * h), (*grads[t])[i]));
    }
  }
  Tensor in2 = in;
  for (int i = 0; i < in.size(); ++i) {
    double saved = in2[i];
    in2[i] = saved + h;
    double lp = dot(model.infer(in2), r);
    in2[i] = saved - h;
    double lm = dot(model.infer(in2), r);
    in2[i] = saved;
    worst = std::max(worst, relative_error((lp - lm) / (2 * h), gin[i]));
  }
  return worst;
}

void prime(NetworkModel& model, RngStream& rng, int batch = 3) {
  std::vector<Tensor> ref;
  for (int i = 0; i < batch; ++i) ref.push_back(random_tensor(model.input_shape(), rng));
  model.update_reference_stats(ref);
}

}  // namespace

std::vector<CheckReport> run_adjoint_checks() {
  const double tol = 1e-10;
  std::vector<std::pair<std::string, LinearOperator>> ops;
  ops.emplace_back("identity d=784", identity_op(784));
  ops.emplace_back("mask pixelwise 28x28",
                   mask_op({MaskKind::kPixelwise, 0.5, 11}, 28, 28, 1));
  ops.emplace_back("mask scattered 28x28", mask_op({MaskKind::kScattered, 0.0, 12}, 28, 28, 1));
  ops.emplace_back("mask center-block 28x28",
                   mask_op({MaskKind::kCenteredBlock, 0.0, 13}, 28, 28, 1));
  ops.emplace_back("gaussian d=784 ratio=0.3", gaussian_matrix_op(784, 0.3, 14));
  ops.emplace_back("gaussian d=64 ratio=1.0", gaussian_matrix_op(64, 1.0, 15));
  ops.emplace_back("box-downsample 28x28 f=2", box_downsample_op(28, 28, 1, 2));
  ops.emplace_back("box-downsample 28x28 f=4", box_downsample_op(28, 28, 1, 4));
  ops.emplace_back("resampled gaussian 20%",
                   resample_operator_entries(gaussian_matrix_op(256, 0.3, 16), 0.2, 17));

  std::vector<CheckReport> reports;
  for (auto& [name, op] : ops) {
    CheckReport r;
    r.name = "adjoint: " + name;
    r.tolerance = tol;
    r.worst = adjoint_check(op, 100, 1234);
    r.pass = r.worst < tol;
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<CheckReport> run_gradient_checks() {
  const double tol = 1e-4;
  std::vector<CheckReport> reports;
  RngStream rng(7);

  auto single = [&](const std::string& name, NetworkModel&& model, bool needs_stats) {
    if (needs_stats) prime(model, rng);
    CheckReport r;
    r.name = "gradient: " + name;
    r.tolerance = tol;
    r.worst = fd_worst_error(model, random_tensor(model.input_shape(), rng));
    r.pass = r.worst < tol;
    reports.push_back(std::move(r));
  };

  {
    NetworkModel m;
    m.add(make_conv({5, 6, 2}, 3, 3, 1, rng));
    single("conv 3x3 s1", std::move(m), false);
  }
  {
    NetworkModel m;
    m.add(make_conv({6, 6, 2}, 4, 3, 2, rng));
    single("conv 4x4 s2", std::move(m), false);
  }
  {
    NetworkModel m;
    m.add(make_dconv({3, 3, 2}, 4, 2, 2, rng));
    single("dconv 4x4 s2", std::move(m), false);
  }
  {
    NetworkModel m;
    m.add(make_dconv({4, 4, 2}, 2, 3, 1, rng));
    single("dconv 2x2 s1", std::move(m), false);
  }
  {
    NetworkModel m;
    m.add(make_dense({2, 3, 2}, 5, rng));
    single("dense", std::move(m), false);
  }
  {
    NetworkModel m;
    m.add(make_channelwise_dense({3, 3, 2}, rng));
    single("channelwise dense", std::move(m), false);
  }
  {
    NetworkModel m;
    m.add(make_elu_layer({4, 4, 2}));
    single("elu", std::move(m), false);
  }
  {
    NetworkModel m;
    m.add(make_refnorm({4, 4, 3}));
    single("refnorm", std::move(m), true);
  }
  {
    NetworkModel m;
    m.add(make_bottleneck({4, 4, 4}, BottleneckKind::kSame, rng));
    single("bottleneck same", std::move(m), true);
  }
  {
    NetworkModel m;
    m.add(make_bottleneck({4, 4, 4}, BottleneckKind::kHalf, rng));
    single("bottleneck half", std::move(m), true);
  }
  {
    NetworkModel m;
    m.add(make_bottleneck({4, 4, 4}, BottleneckKind::kQuarter, rng));
    single("bottleneck quarter", std::move(m), true);
  }

  // full training loss on a reduced projector with its real classifiers
  {
    ProjectorArch arch;
    arch.input = {8, 8, 1};
    arch.c1 = 2;
    arch.c2 = 3;
    arch.c3 = 4;
    ProjectionNetworkPair pair = build_projector(arch, rng);
    NetworkModel d = build_image_classifier(arch.input, rng);
    NetworkModel dl = build_latent_classifier(pair.latent_shape(), rng);

    std::vector<Tensor> ref;
    for (int i = 0; i < 3; ++i) ref.push_back(random_tensor(arch.input, rng));
    pair.encoder.update_reference_stats(ref);
    std::vector<Tensor> latents;
    for (const Tensor& t : ref) latents.push_back(pair.encoder.infer(t));
    pair.decoder.update_reference_stats(latents);
    d.update_reference_stats(ref);
    dl.update_reference_stats(latents);

    Tensor x = random_tensor(arch.input, rng);
    Tensor v = random_tensor(arch.input, rng);
    LossWeights w;

    pair.encoder.zero_grads();
    pair.decoder.zero_grads();
    d.zero_grads();
    dl.zero_grads();
    projector_loss(pair, d, dl, x, v, w, true);

    std::vector<Tensor*> params = pair.encoder.params();
    for (Tensor* p : pair.decoder.params()) params.push_back(p);
    std::vector<Tensor*> grads = pair.encoder.grads();
    for (Tensor* g : pair.decoder.grads()) grads.push_back(g);

    const double h = 1e-5;
    double worst = 0.0;
    for (size_t t = 0; t < params.size(); ++t) {
      Tensor& p = *params[t];
      const int step = std::max(1, p.size() / 16);  // subsample large tensors
      for (int i = 0; i < p.size(); i += step) {
        double saved = p[i];
        p[i] = saved + h;
        double lp = projector_loss(pair, d, dl, x, v, w, false).total;
        p[i] = saved - h;
        double lm = projector_loss(pair, d, dl, x, v, w, false).total;
        p[i] = saved;
        worst = std::max(worst, relative_error((lp - lm) / (2 * h), (*grads[t])[i]));
      }
    }
    CheckReport r;
    r.name = "gradient: full projector training loss";
    r.tolerance = tol;
    r.worst = worst;
    r.pass = worst < tol;
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<CheckReport> run_wavelet_checks(int images) {
  RngStream rng(21);
  double worst_recon = 0.0;
  double worst_energy = 0.0;
  for (int i = 0; i < images; ++i) {
    int size = i % 2 == 0 ? 16 : 8;
    int levels = i % 2 == 0 ? 2 : 3;
    Image img(size, size, 1);
    for (int j = 0; j < img.pixels.size(); ++j) img.pixels[j] = rng.uniform(-1.0, 1.0);

    WaveletCoeffs c = haar_forward(img, levels);
    double energy = dot(c.ll, c.ll);
    for (const auto& band : c.bands)
      energy += dot(band.lh, band.lh) + dot(band.hl, band.hl) + dot(band.hh, band.hh);
    double nx = dot(img.pixels, img.pixels);
    worst_energy = std::max(worst_energy, std::abs(std::sqrt(energy) - std::sqrt(nx)) /
                                              std::max(std::sqrt(nx), 1e-30));

    Image back = haar_inverse(c);
    for (int j = 0; j < img.pixels.size(); ++j)
      worst_recon = std::max(worst_recon, std::abs(back.pixels[j] - img.pixels[j]));
  }

  std::vector<CheckReport> reports;
  reports.push_back({"wavelet: perfect reconstruction", worst_recon, 1e-12, worst_recon <= 1e-12});
  reports.push_back({"wavelet: energy preservation", worst_energy, 1e-10, worst_energy <= 1e-10});
  return reports;
}

std::vector<CheckReport> run_cg_checks() {
  RngStream rng(31);
  std::vector<CheckReport> reports;
  for (int n : {10, 50, 100}) {
    std::vector<double> b(static_cast<size_t>(n) * n);
    for (auto& v : b) v = rng.gaussian();
    std::vector<double> a(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k)
          a[static_cast<size_t>(i) * n + j] +=
              b[static_cast<size_t>(k) * n + i] * b[static_cast<size_t>(k) * n + j];
        if (i == j) a[static_cast<size_t>(i) * n + j] += 1.0;
      }
    auto apply = [&](const Tensor& v) {
      Tensor out({n});
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += a[static_cast<size_t>(i) * n + j] * v[j];
        out[i] = s;
      }
      return out;
    };
    Tensor rhs = rng.gaussian_vector(n);
    CgResult r = cg_solve(apply, rhs, 1e-8, 2 * n);
    CheckReport rep;
    rep.name = "cg: random SPD " + std::to_string(n) + "x" + std::to_string(n);
    rep.tolerance = 1e-8;
    rep.worst = r.residual;
    rep.pass = r.converged && r.iterations <= 2 * n;
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace prox
