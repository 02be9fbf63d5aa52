#include "prox/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "prox/checks.hpp"
#include "prox/training.hpp"

namespace prox {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  return x;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::string number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open output file: " + path);
  return out;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_measurements(const std::string& path, int h, int w, int c, const Tensor& y) {
  std::ofstream out = open_out(path);
  out << h << " " << w << " " << c << "\n" << y.size() << "\n";
  for (int i = 0; i < y.size(); ++i) out << number(y[i]) << "\n";
}

Tensor read_measurements(const std::string& path, int& h, int& w, int& c) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open measurements file: " + path);
  int m = 0;
  if (!(in >> h >> w >> c >> m) || h < 1 || w < 1 || c < 1 || m < 1)
    throw FormatError(path + ": bad measurements header");
  Tensor y({m});
  for (int i = 0; i < m; ++i)
    if (!(in >> y[i])) throw FormatError(path + ": truncated measurement values");
  return y;
}

}  // namespace

LinearOperator task_operator(const ExperimentConfig& cfg, const std::string& task, int h, int w,
                             int c, std::uint64_t seed) {
  const int d = h * w * c;
  if (task == "cs") return gaussian_matrix_op(d, cfg.ratio, seed);
  if (task == "pixelwise_inpaint")
    return mask_op({MaskKind::kPixelwise, cfg.drop_rate, seed}, h, w, c);
  if (task == "scattered_inpaint") return mask_op({MaskKind::kScattered, 0.0, seed}, h, w, c);
  if (task == "block_inpaint") return mask_op({MaskKind::kCenteredBlock, 0.0, seed}, h, w, c);
  if (task == "superres") return box_downsample_op(h, w, c, cfg.factor);
  if (task == "denoise") return identity_op(d);
  throw ConfigError("unknown task '" + task + "'");
}

double task_sigma(const ExperimentConfig& cfg, const std::string& task) {
  if (task == "denoise") return 2.0 * cfg.sigma255 / 255.0;
  return cfg.sigma;
}

double solve_rho(const ExperimentConfig& cfg, const std::string& task) {
  if (cfg.rho > 0.0) return cfg.rho;
  if (task == "denoise" && cfg.sigma255 > 0.0) return denoise_rho(cfg.sigma255);
  return 0.3;
}

double bench_rho(const ExperimentConfig& cfg, const std::string& task) {
  if (cfg.rho > 0.0) return cfg.rho;
  if (task == "pixelwise_inpaint") return 0.1;
  if (task == "scattered_inpaint" || task == "block_inpaint") return 0.05;
  if (task == "denoise" && cfg.sigma255 > 0.0) return denoise_rho(cfg.sigma255);
  return 0.3;
}

ProxOperator build_prior(const ExperimentConfig& cfg, const std::string& prior, int h, int w,
                         int c, std::shared_ptr<const ProjectionNetworkPair> model) {
  if (prior == "l1_wavelet") {
    L1WaveletPrior p;
    p.lambda = cfg.lambda;
    p.levels = cfg.wavelet_levels;
    p.height = h;
    p.width = w;
    p.channels = c;
    return l1_wavelet_prox(p);
  }
  if (prior == "projector") {
    if (!model) throw ConfigError("prior 'projector' requires a model file");
    Shape3 in = model->input_shape();
    if (cfg.patch_size > 0 && (h != in.h || w != in.w))
      return patchwise_projector_prox(model, h, w, c, cfg.patch_size);
    if (h != in.h || w != in.w || c != in.c)
      throw DimensionError("projector expects " + std::to_string(in.h) + "x" +
                           std::to_string(in.w) + " input; set prior.patch_size for tiling");
    return projector_prox(model);
  }
  throw ConfigError("unknown prior '" + prior + "'");
}

DatasetHandle load_configured_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("io.dataset is required");
  DatasetHandle ds;
  if (std::filesystem::is_directory(cfg.dataset_path)) {
    ds = load_image_directory(cfg.dataset_path);
  } else {
    ds = load_idx(cfg.dataset_path, cfg.labels_path);
  }
  if (cfg.limit > 0 && cfg.limit < static_cast<long>(ds.items.size()))
    ds.items.resize(cfg.limit);
  return ds;
}

void cmd_train(const ExperimentConfig& cfg) {
  DatasetHandle data = load_configured_dataset(cfg);

  TrainConfig tc;
  tc.arch.input = {data.height, data.width, data.channels};
  tc.batch_size = cfg.batch_size;
  tc.iterations = cfg.iterations;
  tc.lr = cfg.lr;
  tc.c_clip = cfg.c_clip;
  tc.weights = cfg.weights;
  tc.perturb.smoothing_enabled = cfg.smoothing;
  tc.perturb.low_res_mask_side = cfg.mask_side;
  tc.eval_interval = cfg.eval_interval;
  tc.patience = cfg.patience;
  tc.validation_fraction = cfg.validation_fraction;
  tc.training_seed = cfg.training_seed;
  tc.data_seed = cfg.data_seed;

  TrainState state(tc);
  TrainResult result = train(data.items, state);

  std::filesystem::create_directories(cfg.out_dir);
  if (std::filesystem::path(cfg.model_out).has_parent_path())
    std::filesystem::create_directories(std::filesystem::path(cfg.model_out).parent_path());
  save_projector(cfg.model_out, result.best);

  std::ofstream csv = open_out(join_path(cfg.out_dir, "train_metrics.csv"));
  csv << "# " << config_comment(cfg) << "\n";
  csv << "iteration,total,clean_recon,perturbed_recon,projection_dist,adv_latent,adv_image,"
         "image_cls,latent_cls,val_loss,cls_grad_norm\n";
  std::map<long, const ValidationRecord*> val;
  for (const ValidationRecord& r : result.validation) val[r.iteration] = &r;
  for (const StepMetrics& m : result.metrics) {
    csv << m.iteration + 1 << "," << number(m.projector.total) << ","
        << number(m.projector.clean_recon) << "," << number(m.projector.perturbed_recon) << ","
        << number(m.projector.projection_dist) << "," << number(m.projector.adv_latent) << ","
        << number(m.projector.adv_image) << "," << number(m.image_cls_loss) << ","
        << number(m.latent_cls_loss) << ",";
    auto it = val.find(m.iteration + 1);
    if (it != val.end())
      csv << number(it->second->loss) << "," << number(it->second->classifier_grad_norm);
    else
      csv << ",";
    csv << "\n";
  }

  std::cout << "trained " << result.stopped_at << " iterations; model written to "
            << cfg.model_out << "\n";
}

void cmd_solve(const ExperimentConfig& cfg) {
  int h = 0, w = 0, c = 0;
  Tensor y;
  Tensor ground_truth;
  bool have_truth = false;

  if (!cfg.input_path.empty()) {
    Image img = load_image_file(cfg.input_path);
    h = img.height;
    w = img.width;
    c = img.channels;
    ground_truth = img.pixels;
    have_truth = true;
  } else if (cfg.measurements_path.empty()) {
    throw ConfigError("solve needs io.input or io.measurements");
  }

  LinearOperator op;
  std::filesystem::create_directories(cfg.out_dir);
  if (!cfg.measurements_path.empty()) {
    int mh = 0, mw = 0, mc = 0;
    Tensor loaded = read_measurements(cfg.measurements_path, mh, mw, mc);
    if (have_truth && (mh != h || mw != w || mc != c))
      throw DimensionError("measurements geometry does not match the input image");
    h = mh;
    w = mw;
    c = mc;
    op = task_operator(cfg, cfg.task, h, w, c, cfg.operator_seed);
    if (loaded.size() != op.out_dim)
      throw DimensionError("measurement count does not match the task operator");
    y = std::move(loaded);
  } else {
    op = task_operator(cfg, cfg.task, h, w, c, cfg.operator_seed);
    y = op.forward(ground_truth.reshaped({h * w * c}));
    double sigma = task_sigma(cfg, cfg.task);
    if (sigma > 0.0) y = add_measurement_noise(y, sigma, mix_seed(cfg.operator_seed, 0xA0));
    write_measurements(join_path(cfg.out_dir, "measurements.txt"), h, w, c, y);
  }

  std::shared_ptr<const ProjectionNetworkPair> model;
  if (cfg.prior == "projector") {
    if (cfg.model_path.empty()) throw ConfigError("prior.model is required for prior=projector");
    model = std::make_shared<ProjectionNetworkPair>(load_projector(cfg.model_path));
  }
  ProxOperator prior = build_prior(cfg, cfg.prior, h, w, c, model);

  AdmmConfig acfg;
  acfg.rho = solve_rho(cfg, cfg.task);
  acfg.max_iters = cfg.max_iters;
  acfg.stop_tol = cfg.stop_tol;
  acfg.cg_tol = cfg.cg_tol;
  acfg.cg_max_iters = cfg.cg_max_iters;
  acfg.early_stop_at = cfg.early_stop_at;

  AdmmResult result =
      admm_solve(op, y, prior, acfg, have_truth ? &ground_truth : nullptr);

  Image out = Image::from_tensor(result.x.reshaped({h, w, c}));
  std::string image_path = join_path(cfg.out_dir, "reconstruction.png");
  save_image_file(out, image_path);
  std::ofstream trace = open_out(join_path(cfg.out_dir, "trace.csv"));
  write_trace_csv(trace, result.trace, config_comment(cfg));

  std::cout << "task=" << cfg.task << " prior=" << cfg.prior << " rho=" << number(acfg.rho)
            << " iterations=" << result.trace.records.size()
            << (result.trace.converged ? " converged" : "")
            << (result.trace.diverged ? " DIVERGED" : "");
  if (have_truth) {
    Image rec = Image::from_tensor(result.x.reshaped({h, w, c}));
    Image gt = Image::from_tensor(ground_truth.reshaped({h, w, c}));
    std::cout << " psnr=" << number(psnr(gt, rec));
  }
  std::cout << "\nwrote " << image_path << "\n";
}

void cmd_bench(const ExperimentConfig& cfg) {
  DatasetHandle data = load_configured_dataset(cfg);
  const int n = std::min<int>(cfg.bench_count, data.count());
  if (n < 1) throw ConfigError("bench: empty dataset");
  const int h = data.height, w = data.width, c = data.channels;

  auto tasks = split_list(cfg.bench_tasks);
  auto priors = split_list(cfg.bench_priors);
  if (tasks.empty() || priors.empty()) throw ConfigError("bench: empty task or prior list");

  std::shared_ptr<const ProjectionNetworkPair> model;
  for (const std::string& p : priors)
    if (p == "projector") {
      if (cfg.model_path.empty())
        throw ConfigError("prior.model is required to benchmark the projector");
      model = std::make_shared<ProjectionNetworkPair>(load_projector(cfg.model_path));
    }

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream csv = open_out(join_path(cfg.out_dir, "bench.csv"));
  std::ofstream timing = open_out(join_path(cfg.out_dir, "bench_timing.log"));
  csv << "# " << config_comment(cfg) << "\n";
  csv << "task,prior,image,psnr,iterations,converged,status\n";

  for (const std::string& task : tasks) {
    // noise only applies to the tasks that define it
    double sigma = (task == "pixelwise_inpaint" || task == "denoise") ? task_sigma(cfg, task) : 0.0;
    const bool per_image_operator = task == "pixelwise_inpaint" || task == "scattered_inpaint";
    LinearOperator shared_op;
    if (!per_image_operator) shared_op = task_operator(cfg, task, h, w, c, cfg.operator_seed);

    AdmmConfig acfg;
    acfg.rho = bench_rho(cfg, task);
    acfg.max_iters = cfg.max_iters;
    acfg.stop_tol = cfg.stop_tol;
    acfg.cg_tol = cfg.cg_tol;
    acfg.cg_max_iters = cfg.cg_max_iters;
    acfg.early_stop_at = cfg.early_stop_at;

    for (const std::string& prior_name : priors) {
      double psnr_sum = 0.0;
      long iter_sum = 0;
      int ok = 0;
      for (int i = 0; i < n; ++i) {
        auto started = std::chrono::steady_clock::now();
        try {
          if (per_image_operator)
            shared_op = task_operator(cfg, task, h, w, c, mix_seed(cfg.operator_seed, 1000 + i));
          const LinearOperator& op = shared_op;
          const Tensor& x_true = data.items[i];
          Tensor y = op.forward(x_true.reshaped({h * w * c}));
          if (sigma > 0.0)
            y = add_measurement_noise(y, sigma, mix_seed(cfg.operator_seed, 5000 + i));

          ProxOperator prior = build_prior(cfg, prior_name, h, w, c, model);
          AdmmResult result = admm_solve(op, y, prior, acfg, &x_true);

          double score = psnr(x_true, result.x.reshaped(x_true.shape()));
          psnr_sum += score;
          iter_sum += static_cast<long>(result.trace.records.size());
          ok += 1;
          csv << task << "," << prior_name << "," << i << "," << number(score) << ","
              << result.trace.records.size() << "," << (result.trace.converged ? 1 : 0)
              << ",ok\n";
        } catch (const Error& e) {
          csv << task << "," << prior_name << "," << i << ",,,,failed\n";
          std::cerr << "bench " << task << "/" << prior_name << "/" << i << ": " << e.what()
                    << "\n";
        }
        auto elapsed = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
        timing << task << "," << prior_name << "," << i << "," << number(elapsed) << "ms\n";
      }
      if (ok > 0)
        csv << task << "," << prior_name << ",mean," << number(psnr_sum / ok) << ","
            << number(static_cast<double>(iter_sum) / ok) << ",," << ok << "/" << n << "\n";
    }
  }
  std::cout << "wrote " << join_path(cfg.out_dir, "bench.csv") << "\n";
}

bool cmd_check(const std::string& kind) {
  std::vector<CheckReport> reports;
  if (kind == "adjoint") {
    reports = run_adjoint_checks();
  } else if (kind == "gradient") {
    reports = run_gradient_checks();
  } else if (kind == "wavelet") {
    reports = run_wavelet_checks();
  } else if (kind == "cg") {
    reports = run_cg_checks();
  } else if (kind == "all") {
    for (auto suite : {run_adjoint_checks(), run_gradient_checks(), run_wavelet_checks(1000),
                       run_cg_checks()})
      reports.insert(reports.end(), suite.begin(), suite.end());
  } else {
    throw ConfigError("unknown check '" + kind + "' (adjoint|gradient|wavelet|cg|all)");
  }

  bool all_pass = true;
  for (const CheckReport& r : reports) {
    std::printf("%-45s worst=%.3e tol=%.0e %s\n", r.name.c_str(), r.worst, r.tolerance,
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  return all_pass;
}

}  // namespace prox
