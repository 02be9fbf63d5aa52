#pragma once

#include <string>
#include <vector>

namespace prox {

struct CheckReport {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Adjoint identity over every built-in operator kind, 100 seeded trials each.
std::vector<CheckReport> run_adjoint_checks();

// Central finite differences against reverse-mode gradients for every layer
// kind and for the full projector training loss (parameters subsampled for
// the composite networks).
std::vector<CheckReport> run_gradient_checks();

// Perfect reconstruction and energy preservation on random images.
std::vector<CheckReport> run_wavelet_checks(int images = 1000);

// Random SPD systems solved to 1e-8 within 2n iterations.
std::vector<CheckReport> run_cg_checks();

}  // namespace prox
