// Acceptance suite: runs every gate criterion end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.
//
// Usage: acceptance [--data DIR] [--out DIR] [--train-iters N]
//   --data        directory with train-images.idx / test-images.idx
//   --out         scratch directory for models and CSV outputs
//   --train-iters training budget for the smoke run (>= 500)

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "prox/checks.hpp"
#include "prox/commands.hpp"
#include "prox/datasets.hpp"
#include "prox/training.hpp"

using namespace prox;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  return x;
}

// Dense Gaussian-elimination solve, the direct oracle for criterion 4.
Tensor dense_solve(std::vector<double> a, Tensor b) {
  const int n = b.size();
  for (int col = 0; col < n; ++col) {
    int best = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[best * n + col])) best = r;
    if (best != col) {
      for (int k = 0; k < n; ++k) std::swap(a[col * n + k], a[best * n + k]);
      std::swap(b[col], b[best]);
    }
    for (int r = col + 1; r < n; ++r) {
      double f = a[r * n + col] / a[col * n + col];
      for (int k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  Tensor x({n});
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < n; ++k) s -= a[r * n + k] * x[k];
    x[r] = s / a[r * n + r];
  }
  return x;
}

bool suite_passes(const std::vector<CheckReport>& reports, double& worst) {
  bool pass = true;
  worst = 0.0;
  for (const CheckReport& r : reports) {
    pass = pass && r.pass;
    worst = std::max(worst, r.worst / r.tolerance);
  }
  return pass;
}

struct BenchTask {
  std::string name;
  double sigma = 0.0;
  double rho = 0.3;
};

// Mean PSNR of one prior over the first n test digits of a task.
double bench_mean_psnr(const BenchTask& task, const std::string& prior_name,
                       const std::vector<Tensor>& digits, int n,
                       std::shared_ptr<const ProjectionNetworkPair> model,
                       const LinearOperator* fixed_op = nullptr) {
  ExperimentConfig cfg;
  cfg.drop_rate = 0.5;
  cfg.lambda = 0.05;

  AdmmConfig acfg;
  acfg.rho = task.rho;
  acfg.max_iters = 200;

  const bool per_image = task.name == "pixelwise_inpaint" || task.name == "scattered_inpaint";
  LinearOperator shared;
  if (!fixed_op && !per_image) shared = task_operator(cfg, task.name, 28, 28, 1, 2);

  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    LinearOperator per;
    const LinearOperator& op = fixed_op  ? *fixed_op
                               : per_image ? (per = task_operator(cfg, task.name, 28, 28, 1,
                                                                  mix(2, 1000 + i)))
                                           : shared;
    const Tensor& x = digits[i];
    Tensor y = op.forward(x.reshaped({784}));
    if (task.sigma > 0.0) y = add_measurement_noise(y, task.sigma, mix(2, 5000 + i));
    ProxOperator prior = build_prior(cfg, prior_name, 28, 28, 1, model);
    AdmmResult r = admm_solve(op, y, prior, acfg, &x);
    sum += psnr(x, r.x.reshaped(x.shape()));
  }
  return sum / n;
}

}  // namespace

int main(int argc, char** argv) {
  std::string data_dir = "data/mnist";
  std::string out_dir = "acceptance_out";
  long train_iters = 1000;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::strcmp(argv[i], "--data") == 0) data_dir = argv[i + 1];
    else if (std::strcmp(argv[i], "--out") == 0) out_dir = argv[i + 1];
    else if (std::strcmp(argv[i], "--train-iters") == 0) train_iters = std::atol(argv[i + 1]);
  }
  if (train_iters < 500) train_iters = 500;
  std::filesystem::create_directories(out_dir);

  // 1. adjoint correctness -------------------------------------------------
  {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    bool pass = suite_passes(run_adjoint_checks(), worst);
    double dt = seconds_since(t0);
    report(1, "adjoint correctness of every built-in operator", pass && dt < 5.0,
           fmt("worst/tol=%.2e, %.2f s", worst, dt));
  }

  // 2. CG exactness ---------------------------------------------------------
  {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    bool pass = suite_passes(run_cg_checks(), worst);
    double dt = seconds_since(t0);
    report(2, "conjugate gradient solves random SPD systems", pass && dt < 5.0,
           fmt("worst residual/tol=%.2e, %.2f s", worst, dt));
  }

  // 3. wavelet exactness ----------------------------------------------------
  {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    bool pass = suite_passes(run_wavelet_checks(1000), worst);
    double dt = seconds_since(t0);
    report(3, "wavelet reconstruction and energy preservation", pass && dt < 10.0,
           fmt("worst/tol=%.2e, %.2f s", worst, dt));
  }

  // 4. prox/ADMM oracle equivalence ------------------------------------------
  {
    // soft-threshold fixed point
    RngStream rng(19);
    const int d = 64;
    Tensor y({d});
    for (int i = 0; i < d; ++i) y[i] = rng.uniform(-0.8, 0.8);
    const double lambda = 0.15;
    AdmmConfig acfg;
    acfg.rho = 0.7;
    acfg.stop_tol = 1e-9;
    acfg.max_iters = 300;
    AdmmResult st = admm_solve(identity_op(d), y, pixel_l1_prox(lambda), acfg);
    double soft_err = 0.0;
    for (int i = 0; i < d; ++i) {
      double a = std::abs(y[i]) - lambda;
      double expected = a > 0.0 ? std::copysign(a, y[i]) : 0.0;
      soft_err = std::max(soft_err, std::abs(st.x[i] - expected));
    }
    bool soft_ok = soft_err <= 1e-6 && st.trace.records.size() <= 300;

    // invertible operator with the identity prox; with no prior to balance,
    // a small rho contracts the iteration fast even for ill-conditioned A
    LinearOperator op = gaussian_matrix_op(d, 1.0, 3);
    Tensor x_true({d});
    for (int i = 0; i < d; ++i) x_true[i] = rng.uniform(-0.9, 0.9);
    Tensor yy = op.forward(x_true);
    AdmmConfig acfg2;
    acfg2.rho = 1e-3;
    acfg2.stop_tol = 1e-10;
    acfg2.max_iters = 300;
    acfg2.cg_tol = 1e-12;
    acfg2.cg_max_iters = 2000;
    AdmmResult inv = admm_solve(op, yy, identity_prox(), acfg2);
    Tensor direct = dense_solve(*op.matrix, yy);
    double inv_err = 0.0;
    for (int i = 0; i < d; ++i) inv_err = std::max(inv_err, std::abs(inv.x[i] - direct[i]));
    bool inv_ok = inv_err <= 1e-6;

    report(4, "ADMM equals closed-form prox and direct solve", soft_ok && inv_ok,
           fmt("soft-threshold inf-err=%.2e, direct-solve inf-err=%.2e", soft_err, inv_err));
  }

  // 5. gradient suite --------------------------------------------------------
  {
    double worst = 0.0;
    bool pass = suite_passes(run_gradient_checks(), worst);
    report(5, "finite-difference gradients for all layers and the full loss", pass,
           fmt("worst/tol=%.2e", worst));
  }

  // 6. training smoke ---------------------------------------------------------
  ProjectionNetworkPair projector;
  bool trained = false;
  std::string model_path = (std::filesystem::path(out_dir) / "projector.prxa").string();
  {
    auto t0 = std::chrono::steady_clock::now();
    std::string train_idx = (std::filesystem::path(data_dir) / "train-images.idx").string();
    std::string test_idx = (std::filesystem::path(data_dir) / "test-images.idx").string();
    if (!std::filesystem::exists(train_idx) || !std::filesystem::exists(test_idx)) {
      report(6, "training smoke on MNIST", false, "dataset not found under " + data_dir);
    } else {
      DatasetHandle train_data = load_idx(train_idx);
      if (train_data.count() > 1000) train_data.items.resize(1000);
      DatasetHandle test_data = load_idx(test_idx);

      TrainConfig tc;
      tc.iterations = train_iters;
      tc.lr = 1.5e-3;  // desk-scale budget needs a larger step than the default
      tc.eval_interval = 100;
      tc.patience = 1 << 20;  // the smoke run uses the full budget
      tc.validation_fraction = 0.1;
      TrainState state(tc);
      TrainResult result = train(train_data.items, state);

      double early = 0.0, late = 0.0;
      for (int i = 0; i < 100; ++i) early += result.metrics[i].projector.total / 100.0;
      for (int i = 400; i < 500; ++i) late += result.metrics[i].projector.total / 100.0;

      save_projector(model_path, result.best);
      projector = load_projector(model_path);
      trained = true;

      RngStream prng(999);
      PerturbationConfig pc;
      const int n_eval = std::min(100, test_data.count());
      double v_psnr = 0.0, pv_psnr = 0.0;
      double idem = 0.0;  // |P(P(v)) - P(v)| / |P(v) - v|, reported only
      for (int i = 0; i < n_eval; ++i) {
        const Tensor& x = test_data.items[i];
        Tensor v = perturb(Image::from_tensor(x), pc, prng).pixels;
        Tensor pv = project_image(projector, v);
        v_psnr += psnr(x, clamp_image(Image::from_tensor(v)).pixels) / n_eval;
        pv_psnr += psnr(x, pv.reshaped(x.shape())) / n_eval;
        Tensor ppv = project_image(projector, pv);
        idem += l2_norm(ppv - pv) / std::max(l2_norm(pv - v.reshaped(pv.shape())), 1e-12) / n_eval;
      }
      double dt = seconds_since(t0);
      bool pass = late < early && (pv_psnr - v_psnr) >= 1.0 && dt < 1800.0;
      report(6, "training smoke on MNIST", pass,
             fmt("loss %.1f -> %.1f, held-out PSNR %.2f -> %.2f dB (gain %.2f), "
                 "idempotence ratio %.2f, %.0f s",
                 early, late, v_psnr, pv_psnr, pv_psnr - v_psnr, idem, dt));
    }
  }

  DatasetHandle test_data;
  if (trained)
    test_data = load_idx((std::filesystem::path(data_dir) / "test-images.idx").string());

  // 7. one network, many problems ----------------------------------------------
  if (!trained) {
    report(7, "single projector beats the wavelet-l1 baseline on 3 of 4 tasks", false,
           "skipped: no trained model");
  } else {
    auto t0 = std::chrono::steady_clock::now();
    auto model = std::make_shared<const ProjectionNetworkPair>(projector);
    const int n = std::min(50, test_data.count());
    std::vector<BenchTask> tasks = {
        {"cs", 0.0, 0.3},
        {"pixelwise_inpaint", 0.1, 0.1},
        {"block_inpaint", 0.0, 0.05},
        {"superres", 0.0, 0.3},
    };
    int wins = 0;
    std::string detail;
    for (const BenchTask& task : tasks) {
      double l1 = bench_mean_psnr(task, "l1_wavelet", test_data.items, n, nullptr);
      double pj = bench_mean_psnr(task, "projector", test_data.items, n, model);
      wins += pj > l1;
      detail += fmt("%s l1=%.2f net=%.2f%s ", task.name.c_str(), l1, pj, pj > l1 ? "+" : "-");
    }
    double dt = seconds_since(t0);
    report(7, "single projector beats the wavelet-l1 baseline on 3 of 4 tasks",
           wins >= 3 && dt < 900.0, detail + fmt("wins=%d/4, %.0f s", wins, dt));
  }

  // 8. robustness to operator resampling ----------------------------------------
  if (!trained) {
    report(8, "stability under 20% operator resampling", false, "skipped: no trained model");
  } else {
    auto model = std::make_shared<const ProjectionNetworkPair>(projector);
    const int n = std::min(50, test_data.count());
    BenchTask cs{"cs", 0.0, 0.3};
    LinearOperator original = gaussian_matrix_op(784, 0.3, 2);
    LinearOperator resampled = resample_operator_entries(original, 0.2, 77);
    double base = bench_mean_psnr(cs, "projector", test_data.items, n, model, &original);
    double shifted = bench_mean_psnr(cs, "projector", test_data.items, n, model, &resampled);
    double delta = std::abs(base - shifted);
    report(8, "stability under 20% operator resampling", delta <= 2.0,
           fmt("mean PSNR %.2f vs %.2f, |delta|=%.2f dB", base, shifted, delta));
  }

  // 9. convergence of scattered inpainting at rho = 0.05 -------------------------
  if (!trained) {
    report(9, "scattered-inpainting convergence at rho 0.05", false, "skipped: no trained model");
  } else {
    auto model = std::make_shared<const ProjectionNetworkPair>(projector);
    ExperimentConfig cfg;
    const int n = std::min(100, test_data.count());
    int decreased = 0, diverged = 0;
    for (int i = 0; i < n; ++i) {
      LinearOperator op = task_operator(cfg, "scattered_inpaint", 28, 28, 1, mix(2, 9000 + i));
      const Tensor& x = test_data.items[i];
      Tensor y = op.forward(x.reshaped({784}));
      AdmmConfig acfg;
      acfg.rho = 0.05;
      acfg.max_iters = 100;
      ProxOperator prior = build_prior(cfg, "projector", 28, 28, 1, model);
      AdmmResult r = admm_solve(op, y, prior, acfg, &x);
      diverged += r.trace.diverged;
      if (!r.trace.records.empty() &&
          r.trace.records.back().rmse_xz < r.trace.records.front().rmse_xz)
        ++decreased;
    }
    bool pass = decreased >= static_cast<int>(0.95 * n) && diverged == 0;
    report(9, "scattered-inpainting convergence at rho 0.05", pass,
           fmt("RMSE decreased on %d/%d solves, diverged=%d", decreased, n, diverged));
  }

  // 10. benchmark determinism ------------------------------------------------------
  if (!trained) {
    report(10, "cmd_bench is byte-identical across runs", false, "skipped: no trained model");
  } else {
    ExperimentConfig cfg;
    cfg.dataset_path = (std::filesystem::path(data_dir) / "test-images.idx").string();
    cfg.model_path = model_path;
    cfg.out_dir = (std::filesystem::path(out_dir) / "determinism").string();
    cfg.bench_count = 3;
    cfg.bench_tasks = "cs,block_inpaint";
    cfg.bench_priors = "l1_wavelet,projector";
    cfg.max_iters = 15;

    auto read_all = [](const std::string& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      return buf.str();
    };
    cmd_bench(cfg);
    std::string first = read_all(cfg.out_dir + "/bench.csv");
    cmd_bench(cfg);
    std::string second = read_all(cfg.out_dir + "/bench.csv");
    report(10, "cmd_bench is byte-identical across runs",
           !first.empty() && first == second, fmt("%zu bytes compared", first.size()));
  }

  std::printf("%s: %d/10 criteria passed\n", g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              10 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
