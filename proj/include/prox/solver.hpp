#pragma once

#include <iosfwd>
#include <vector>

#include "prox/linops.hpp"
#include "prox/prior.hpp"
#include "prox/tensor.hpp"

namespace prox {

struct AdmmConfig {
  double rho = 0.3;        // penalty weight of the x = z constraint
  int max_iters = 300;
  double stop_tol = 1e-4;  // RMSE(x - z) threshold
  double cg_tol = 1e-10;
  int cg_max_iters = 200;
  int early_stop_at = 0;   // 0 disables the explicit iteration cap
  bool clamp_output = true;
};

// rho = 3*sigma/255 with sigma quoted on the 0..255 gray scale.
double denoise_rho(double sigma255);

struct AdmmIterate {
  int iteration = 0;
  double rmse_xz = 0.0;
  double data_fidelity = 0.0;  // 0.5 * |y - Az|^2
  double psnr = 0.0;
  bool has_psnr = false;
};

struct AdmmTrace {
  std::vector<AdmmIterate> records;
  bool converged = false;  // stop_tol reached
  bool diverged = false;   // an iterate norm exceeded 1e3 * |z0|
};

// x, z and the scaled dual u, all of length d.
struct AdmmState {
  Tensor x;
  Tensor z;
  Tensor u;
};

struct AdmmResult {
  Tensor x;
  AdmmTrace trace;
};

struct CgResult {
  Tensor x;
  int iterations = 0;
  double residual = 0.0;  // relative to |b|
  bool converged = false;
};

// Conjugate gradient for apply_spd(v) = Mv with M symmetric positive
// definite. Returns once |Mx - b| <= tol * |b| or after max_iters.
// Throws NumericalError (with the iteration index) on non-finite values.
CgResult cg_solve(const std::function<Tensor(const Tensor&)>& apply_spd, const Tensor& b,
                  double tol, int max_iters, const Tensor* initial_guess = nullptr);

// Solves (A'A + rho I) z = A'y + rho (x + u) matrix-free.
Tensor z_update(const LinearOperator& A, const Tensor& y, const Tensor& x, const Tensor& u,
                double rho, double cg_tol, int cg_max_iters,
                const Tensor* initial_guess = nullptr);

// ADMM loop: u0 = 0, z0 from the regularized least-squares fit of y, then
// x <- prox(z - u), z <- z_update, u <- u + x - z until the RMSE of x - z
// drops below stop_tol or an iteration cap is hit. ground_truth, when given,
// adds a PSNR column to the trace.
AdmmResult admm_solve(const LinearOperator& A, const Tensor& y, const ProxOperator& prox,
                      const AdmmConfig& cfg, const Tensor* ground_truth = nullptr);

// CSV with columns iteration,rmse_xz,data_fidelity,psnr. `comment`, when
// nonempty, is written as a leading # line.
void write_trace_csv(std::ostream& out, const AdmmTrace& trace, const std::string& comment = "");

}  // namespace prox
