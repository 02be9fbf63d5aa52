#include "prox/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace prox {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

long to_long(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    long v = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + value + "'");
}

}  // namespace

void apply_config_entry(ExperimentConfig& cfg, const std::string& section,
                        const std::string& key, const std::string& value) {
  const std::string full = section + "." + key;

  if (section == "task") {
    if (key == "kind") cfg.task = value;
    else if (key == "ratio") cfg.ratio = to_double(full, value);
    else if (key == "drop_rate") cfg.drop_rate = to_double(full, value);
    else if (key == "sigma") cfg.sigma = to_double(full, value);
    else if (key == "sigma255") cfg.sigma255 = to_double(full, value);
    else if (key == "factor") cfg.factor = static_cast<int>(to_long(full, value));
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "prior") {
    if (key == "kind") cfg.prior = value;
    else if (key == "lambda") cfg.lambda = to_double(full, value);
    else if (key == "wavelet_levels") cfg.wavelet_levels = static_cast<int>(to_long(full, value));
    else if (key == "model") cfg.model_path = value;
    else if (key == "patch_size") cfg.patch_size = static_cast<int>(to_long(full, value));
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "admm") {
    if (key == "rho") cfg.rho = to_double(full, value);
    else if (key == "max_iters") cfg.max_iters = static_cast<int>(to_long(full, value));
    else if (key == "stop_tol") cfg.stop_tol = to_double(full, value);
    else if (key == "cg_tol") cfg.cg_tol = to_double(full, value);
    else if (key == "cg_max_iters") cfg.cg_max_iters = static_cast<int>(to_long(full, value));
    else if (key == "early_stop_at") cfg.early_stop_at = static_cast<int>(to_long(full, value));
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "train") {
    if (key == "iterations") cfg.iterations = to_long(full, value);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_long(full, value));
    else if (key == "lr") cfg.lr = to_double(full, value);
    else if (key == "c_clip") cfg.c_clip = to_double(full, value);
    else if (key == "eval_interval") cfg.eval_interval = static_cast<int>(to_long(full, value));
    else if (key == "patience") cfg.patience = static_cast<int>(to_long(full, value));
    else if (key == "validation_fraction") cfg.validation_fraction = to_double(full, value);
    else if (key == "smoothing") cfg.smoothing = to_bool(full, value);
    else if (key == "mask_side") cfg.mask_side = static_cast<int>(to_long(full, value));
    else if (key == "lambda1") cfg.weights.clean_recon = to_double(full, value);
    else if (key == "lambda2") cfg.weights.perturbed_recon = to_double(full, value);
    else if (key == "lambda3") cfg.weights.projection_dist = to_double(full, value);
    else if (key == "lambda4") cfg.weights.adv_latent = to_double(full, value);
    else if (key == "lambda5") cfg.weights.adv_image = to_double(full, value);
    else if (key == "limit") cfg.limit = to_long(full, value);
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "bench") {
    if (key == "count") cfg.bench_count = static_cast<int>(to_long(full, value));
    else if (key == "tasks") cfg.bench_tasks = value;
    else if (key == "priors") cfg.bench_priors = value;
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "seeds") {
    if (key == "data") cfg.data_seed = static_cast<std::uint64_t>(to_long(full, value));
    else if (key == "operator") cfg.operator_seed = static_cast<std::uint64_t>(to_long(full, value));
    else if (key == "training") cfg.training_seed = static_cast<std::uint64_t>(to_long(full, value));
    else throw ConfigError("config: unknown key '" + full + "'");
  } else if (section == "io") {
    if (key == "dataset") cfg.dataset_path = value;
    else if (key == "labels") cfg.labels_path = value;
    else if (key == "input") cfg.input_path = value;
    else if (key == "measurements") cfg.measurements_path = value;
    else if (key == "model_out") cfg.model_out = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError("config: unknown key '" + full + "'");
  } else {
    throw ConfigError("config: unknown section '" + section + "'");
  }
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);

  ExperimentConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": key outside any [section]");
    apply_config_entry(cfg, section, key, value);
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << "[task]\nkind = " << c.task << "\nratio = " << num(c.ratio)
      << "\ndrop_rate = " << num(c.drop_rate) << "\nsigma = " << num(c.sigma)
      << "\nsigma255 = " << num(c.sigma255) << "\nfactor = " << c.factor << "\n";
  out << "[prior]\nkind = " << c.prior << "\nlambda = " << num(c.lambda)
      << "\nwavelet_levels = " << c.wavelet_levels << "\nmodel = " << c.model_path
      << "\npatch_size = " << c.patch_size << "\n";
  out << "[admm]\nrho = " << num(c.rho) << "\nmax_iters = " << c.max_iters
      << "\nstop_tol = " << num(c.stop_tol) << "\ncg_tol = " << num(c.cg_tol)
      << "\ncg_max_iters = " << c.cg_max_iters << "\nearly_stop_at = " << c.early_stop_at << "\n";
  out << "[train]\niterations = " << c.iterations << "\nbatch_size = " << c.batch_size
      << "\nlr = " << num(c.lr) << "\nc_clip = " << num(c.c_clip)
      << "\neval_interval = " << c.eval_interval << "\npatience = " << c.patience
      << "\nvalidation_fraction = " << num(c.validation_fraction)
      << "\nsmoothing = " << (c.smoothing ? 1 : 0) << "\nmask_side = " << c.mask_side
      << "\nlambda1 = " << num(c.weights.clean_recon)
      << "\nlambda2 = " << num(c.weights.perturbed_recon)
      << "\nlambda3 = " << num(c.weights.projection_dist)
      << "\nlambda4 = " << num(c.weights.adv_latent)
      << "\nlambda5 = " << num(c.weights.adv_image) << "\nlimit = " << c.limit << "\n";
  out << "[bench]\ncount = " << c.bench_count << "\ntasks = " << c.bench_tasks
      << "\npriors = " << c.bench_priors << "\n";
  out << "[seeds]\ndata = " << c.data_seed << "\noperator = " << c.operator_seed
      << "\ntraining = " << c.training_seed << "\n";
  out << "[io]\ndataset = " << c.dataset_path << "\nlabels = " << c.labels_path
      << "\ninput = " << c.input_path << "\nmeasurements = " << c.measurements_path
      << "\nmodel_out = " << c.model_out << "\nout_dir = " << c.out_dir << "\n";
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string text = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_comment(const ExperimentConfig& cfg) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "config=0x%016llx seeds=data:%llu,operator:%llu,training:%llu",
                static_cast<unsigned long long>(config_hash(cfg)),
                static_cast<unsigned long long>(cfg.data_seed),
                static_cast<unsigned long long>(cfg.operator_seed),
                static_cast<unsigned long long>(cfg.training_seed));
  return buf;
}

}  // namespace prox
