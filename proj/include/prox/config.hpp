#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "prox/training.hpp"

namespace prox {

// Experiment description parsed from a sectioned key = value text file.
// Unknown keys are rejected. Every field has a default except file paths.
struct ExperimentConfig {
  // [task]
  std::string task = "cs";  // cs | pixelwise_inpaint | scattered_inpaint |
                            // block_inpaint | superres | denoise
  double ratio = 0.3;       // cs compression m/d
  double drop_rate = 0.5;   // pixelwise inpainting
  double sigma = 0.0;       // measurement-noise std, measurement units
  double sigma255 = 0.0;    // denoise noise std on the 0..255 gray scale
  int factor = 2;           // superres box-averaging factor

  // [prior]
  std::string prior = "l1_wavelet";  // l1_wavelet | projector
  double lambda = 0.05;
  int wavelet_levels = 2;
  std::string model_path;
  int patch_size = 0;  // 0 = whole image

  // [admm]
  double rho = 0.0;  // 0 = auto (0.3, or the denoise preset)
  int max_iters = 300;
  double stop_tol = 1e-4;
  double cg_tol = 1e-10;
  int cg_max_iters = 200;
  int early_stop_at = 0;

  // [train]
  long iterations = 2000;
  int batch_size = 32;
  double lr = 1e-4;
  double c_clip = 0.05;
  int eval_interval = 100;
  int patience = 20;
  double validation_fraction = 0.1;
  bool smoothing = false;
  int mask_side = 4;
  LossWeights weights;
  long limit = 0;  // cap on dataset images (0 = all)

  // [bench]
  int bench_count = 50;
  std::string bench_tasks = "cs,pixelwise_inpaint,block_inpaint,superres";
  std::string bench_priors = "l1_wavelet,projector";

  // [seeds]
  std::uint64_t data_seed = 1;
  std::uint64_t operator_seed = 2;
  std::uint64_t training_seed = 3;

  // [io]
  std::string dataset_path;
  std::string labels_path;
  std::string input_path;
  std::string measurements_path;
  std::string model_out = "projector.prxa";
  std::string out_dir = ".";
};

ExperimentConfig parse_config_file(const std::string& path);
// Applies one "section.key=value" assignment (command-line override form).
void apply_config_entry(ExperimentConfig& cfg, const std::string& section,
                        const std::string& key, const std::string& value);

// Canonical serialization of the effective config; hash input and diff base.
std::string serialize_config(const ExperimentConfig& cfg);
// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const ExperimentConfig& cfg);
// "# config=0x<hash> seeds=data:<d>,operator:<o>,training:<t>" comment line.
std::string config_comment(const ExperimentConfig& cfg);

}  // namespace prox
