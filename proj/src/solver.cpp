#include "prox/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "prox/image.hpp"

namespace prox {

double denoise_rho(double sigma255) {
  if (sigma255 < 0.0) throw ParameterError("denoise_rho: sigma must be >= 0");
  return 3.0 * sigma255 / 255.0;
}

CgResult cg_solve(const std::function<Tensor(const Tensor&)>& apply_spd, const Tensor& b,
                  double tol, int max_iters, const Tensor* initial_guess) {
  if (!(tol > 0.0)) throw ParameterError("cg_solve: tol must be > 0");
  if (max_iters < 1) throw ParameterError("cg_solve: max_iters must be >= 1");
  b.require_finite("cg_solve rhs");

  const double norm_b = l2_norm(b);
  CgResult result;
  if (norm_b == 0.0) {
    result.x = Tensor(b.shape());
    result.converged = true;
    return result;
  }

  Tensor x = initial_guess ? *initial_guess : Tensor(b.shape());
  Tensor r = b - apply_spd(x);
  Tensor p = r;
  double rr = dot(r, r);

  for (int k = 0; k < max_iters; ++k) {
    double rel = std::sqrt(rr) / norm_b;
    if (rel <= tol) {
      result.converged = true;
      break;
    }
    Tensor ap = apply_spd(p);
    double pap = dot(p, ap);
    if (!std::isfinite(pap) || pap <= 0.0)
      throw NumericalError("cg_solve: operator not positive definite at iteration " +
                           std::to_string(k));
    double alpha = rr / pap;
    x = axpy(alpha, p, x);
    r = axpy(-alpha, ap, r);
    double rr_next = dot(r, r);
    if (!std::isfinite(rr_next))
      throw NumericalError("cg_solve: non-finite residual at iteration " + std::to_string(k));
    p = axpy(rr_next / rr, p, r);
    rr = rr_next;
    result.iterations = k + 1;
  }
  result.residual = std::sqrt(rr) / norm_b;
  result.converged = result.converged || result.residual <= tol;
  result.x = std::move(x);
  return result;
}

Tensor z_update(const LinearOperator& A, const Tensor& y, const Tensor& x, const Tensor& u,
                double rho, double cg_tol, int cg_max_iters, const Tensor* initial_guess) {
  if (x.size() != A.in_dim || u.size() != A.in_dim || y.size() != A.out_dim)
    throw DimensionError("z_update: inconsistent dimensions");
  auto normal = [&](const Tensor& v) { return axpy(rho, v, A.adjoint(A.forward(v))); };
  Tensor b = axpy(rho, x + u, A.adjoint(y));
  return cg_solve(normal, b, cg_tol, cg_max_iters, initial_guess).x;
}

AdmmResult admm_solve(const LinearOperator& A, const Tensor& y, const ProxOperator& prox,
                      const AdmmConfig& cfg, const Tensor* ground_truth) {
  if (!(cfg.rho > 0.0)) throw ParameterError("admm_solve: rho must be > 0");
  if (!(cfg.stop_tol > 0.0)) throw ParameterError("admm_solve: stop_tol must be > 0");
  if (y.size() != A.out_dim) throw DimensionError("admm_solve: measurement length mismatch");
  const int d = A.in_dim;

  AdmmState state;
  state.u = Tensor({d});
  {
    // z0: least-squares fit of the measurements, Tikhonov-regularized so the
    // underdetermined case has a unique minimizer.
    const double eps = 1e-6;
    auto normal = [&](const Tensor& v) { return axpy(eps, v, A.adjoint(A.forward(v))); };
    state.z = cg_solve(normal, A.adjoint(y), cfg.cg_tol, cfg.cg_max_iters).x;
  }
  state.x = state.z;
  const double norm_z0 = l2_norm(state.z);
  const double divergence_bound = 1e3 * std::max(norm_z0, 1e-12);

  AdmmResult result;
  for (int k = 1; k <= cfg.max_iters; ++k) {
    Tensor v = state.z - state.u;
    state.x = prox.apply(v, cfg.rho);
    if (state.x.size() != d)
      throw ContractError("admm_solve: prox '" + prox.name + "' returned wrong length");
    if (state.x.shape() != state.z.shape()) state.x = state.x.reshaped(state.z.shape());
    state.x.require_finite("admm_solve prox output");

    state.z = z_update(A, y, state.x, state.u, cfg.rho, cfg.cg_tol, cfg.cg_max_iters, &state.z);
    state.u = state.u + state.x - state.z;

    AdmmIterate rec;
    rec.iteration = k;
    rec.rmse_xz = rmse(state.x, state.z);
    Tensor az = A.forward(state.z);
    double fid = 0.0;
    for (int i = 0; i < az.size(); ++i) {
      double diff = y[i] - az[i];
      fid += diff * diff;
    }
    rec.data_fidelity = 0.5 * fid;
    if (ground_truth) {
      rec.psnr = psnr(*ground_truth, state.x.reshaped(ground_truth->shape()));
      rec.has_psnr = true;
    }
    result.trace.records.push_back(rec);

    if (std::max(l2_norm(state.x), l2_norm(state.z)) > divergence_bound) {
      result.trace.diverged = true;
      break;
    }
    if (rec.rmse_xz < cfg.stop_tol) {
      result.trace.converged = true;
      break;
    }
    if (cfg.early_stop_at > 0 && k >= cfg.early_stop_at) break;
  }

  result.x = std::move(state.x);
  if (cfg.clamp_output)
    for (int i = 0; i < result.x.size(); ++i)
      result.x[i] = std::clamp(result.x[i], -1.0, 1.0);
  return result;
}

void write_trace_csv(std::ostream& out, const AdmmTrace& trace, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "iteration,rmse_xz,data_fidelity,psnr\n";
  char buf[96];
  for (const auto& rec : trace.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g", rec.iteration, rec.rmse_xz,
                  rec.data_fidelity);
    out << buf;
    if (rec.has_psnr) {
      std::snprintf(buf, sizeof(buf), ",%.10g", rec.psnr);
      out << buf << "\n";
    } else {
      out << ",\n";
    }
  }
}

}  // namespace prox
