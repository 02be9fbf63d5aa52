#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prox/prior.hpp"
#include "prox/solver.hpp"

using namespace prox;

namespace {

// Dense symmetric solve by Gaussian elimination with partial pivoting; the
// independent oracle for the matrix-free paths.
Tensor dense_solve(std::vector<double> a, Tensor b) {
  const int n = b.size();
  std::vector<int> piv(n);
  for (int i = 0; i < n; ++i) piv[i] = i;
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

LinearOperator dense_operator(int m, int d, std::vector<double> a) {
  auto mat = std::make_shared<std::vector<double>>(std::move(a));
  LinearOperator op;
  op.in_dim = d;
  op.out_dim = m;
  op.matrix = mat;
  op.forward = [m, d, mat](const Tensor& x) {
    Tensor y({m});
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += (*mat)[i * d + j] * x[j];
      y[i] = s;
    }
    return y;
  };
  op.adjoint = [m, d, mat](const Tensor& y) {
    Tensor x({d});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < d; ++j) x[j] += (*mat)[i * d + j] * y[i];
    return x;
  };
  return op;
}

}  // namespace

TEST_CASE("cg_solve: identity in one iteration") {
  auto apply = [](const Tensor& v) { return v; };
  Tensor b({2}, {1, 2});
  CgResult r = cg_solve(apply, b, 1e-12, 10);
  CHECK(r.converged);
  CHECK(r.iterations <= 1);
  CHECK(r.x[0] == doctest::Approx(1.0));
  CHECK(r.x[1] == doctest::Approx(2.0));
}

TEST_CASE("cg_solve: 2x2 system against direct inversion") {
  // M = [[4,1],[1,3]], b = [1,2]  =>  x = [1/11, 7/11]
  auto apply = [](const Tensor& v) {
    Tensor out({2});
    out[0] = 4 * v[0] + 1 * v[1];
    out[1] = 1 * v[0] + 3 * v[1];
    return out;
  };
  Tensor b({2}, {1, 2});
  CgResult r = cg_solve(apply, b, 1e-12, 10);
  CHECK(r.x[0] == doctest::Approx(1.0 / 11).epsilon(1e-9));
  CHECK(r.x[1] == doctest::Approx(7.0 / 11).epsilon(1e-9));
}

TEST_CASE("cg_solve: diagonal and zero rhs") {
  auto apply = [](const Tensor& v) { return 2.0 * v; };
  Tensor b({1}, {4});
  CgResult r = cg_solve(apply, b, 1e-12, 10);
  CHECK(r.x[0] == doctest::Approx(2.0));

  CgResult z = cg_solve(apply, Tensor({3}), 1e-12, 10);
  CHECK(z.converged);
  for (int i = 0; i < 3; ++i) CHECK(z.x[i] == 0.0);
}

TEST_CASE("cg_solve: random SPD systems converge within dimension-many iterations") {
  RngStream rng(5);
  for (int n : {5, 20, 50}) {
    // SPD via A = B'B + n*I
    std::vector<double> bmat(n * n);
    for (auto& v : bmat) v = rng.gaussian();
    std::vector<double> a(n * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) a[i * n + j] += bmat[k * n + i] * bmat[k * n + j];
        if (i == j) a[i * n + j] += n;
      }
    auto apply = [&](const Tensor& v) {
      Tensor out({n});
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += a[i * n + j] * v[j];
        out[i] = s;
      }
      return out;
    };
    Tensor b = rng.gaussian_vector(n);
    CgResult r = cg_solve(apply, b, 1e-8, 2 * n);
    CHECK(r.converged);
    Tensor expected = dense_solve(a, b);
    for (int i = 0; i < n; ++i)
      CHECK(std::abs(r.x[i] - expected[i]) <= 1e-6 * (std::abs(expected[i]) + 1.0));
  }
}

TEST_CASE("cg_solve: indefinite operator raises a numerical error") {
  auto apply = [](const Tensor& v) { return -1.0 * v; };
  Tensor b({2}, {1, 1});
  CHECK_THROWS_AS(cg_solve(apply, b, 1e-10, 5), NumericalError);
}

TEST_CASE("z_update: closed forms with A = I") {
  LinearOperator id = identity_op(4);
  RngStream rng(7);
  Tensor y = rng.gaussian_vector(4);
  Tensor x = rng.gaussian_vector(4);
  Tensor u = rng.gaussian_vector(4);

  // rho = 1: z = (y + x + u) / 2
  Tensor z = z_update(id, y, x, u, 1.0, 1e-12, 50);
  for (int i = 0; i < 4; ++i)
    CHECK(z[i] == doctest::Approx((y[i] + x[i] + u[i]) / 2).epsilon(1e-9));

  // large rho: z -> x + u
  Tensor z2 = z_update(id, y, x, u, 1e6, 1e-14, 100);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(z2[i] - (x[i] + u[i])) < 1e-4);
}

TEST_CASE("z_update: random dense 8x16 against the dense normal-equation oracle") {
  RngStream rng(11);
  const int m = 8, d = 16;
  std::vector<double> a(m * d);
  for (auto& v : a) v = rng.gaussian();
  LinearOperator op = dense_operator(m, d, a);

  Tensor y = rng.gaussian_vector(m);
  Tensor x = rng.gaussian_vector(d);
  Tensor u = rng.gaussian_vector(d);
  const double rho = 0.4;

  Tensor z = z_update(op, y, x, u, rho, 1e-12, 400);

  // oracle: materialize A'A + rho I and solve directly
  std::vector<double> normal(d * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      for (int k = 0; k < m; ++k) normal[i * d + j] += a[k * d + i] * a[k * d + j];
      if (i == j) normal[i * d + j] += rho;
    }
  Tensor rhs({d});
  for (int j = 0; j < d; ++j) {
    double s = rho * (x[j] + u[j]);
    for (int k = 0; k < m; ++k) s += a[k * d + j] * y[k];
    rhs[j] = s;
  }
  Tensor expected = dense_solve(normal, rhs);
  for (int i = 0; i < d; ++i) CHECK(std::abs(z[i] - expected[i]) <= 1e-8);
}

TEST_CASE("z_update: residual of the normal equations is within the CG tolerance") {
  RngStream rng(13);
  LinearOperator op = gaussian_matrix_op(32, 0.5, 3);
  Tensor y = rng.gaussian_vector(op.out_dim);
  Tensor x = rng.gaussian_vector(op.in_dim);
  Tensor u = rng.gaussian_vector(op.in_dim);
  const double rho = 0.3, tol = 1e-10;
  Tensor z = z_update(op, y, x, u, rho, tol, 500);
  Tensor b = axpy(rho, x + u, op.adjoint(y));
  Tensor mz = axpy(rho, z, op.adjoint(op.forward(z)));
  CHECK(l2_norm(mz - b) <= 10 * tol * l2_norm(b));
}

TEST_CASE("admm_solve: identity operator with identity prox is exact in one step") {
  LinearOperator id = identity_op(9);
  RngStream rng(17);
  Tensor y({9});
  for (int i = 0; i < 9; ++i) y[i] = rng.uniform(-0.9, 0.9);

  AdmmConfig cfg;
  cfg.rho = 0.5;
  cfg.stop_tol = 1e-5;
  AdmmResult r = admm_solve(id, y, identity_prox(), cfg);
  CHECK(r.trace.converged);
  CHECK(r.trace.records.size() == 1);
  CHECK(r.trace.records[0].rmse_xz < 1e-5);
  for (int i = 0; i < 9; ++i) CHECK(std::abs(r.x[i] - y[i]) < 1e-4);
}

TEST_CASE("admm_solve: soft-threshold fixed point matches the closed form") {
  // min 0.5|y - x|^2 + lambda |x|_1 has solution sign(y) max(|y| - lambda, 0)
  const double lambda = 0.15;
  LinearOperator id = identity_op(16);
  RngStream rng(19);
  Tensor y({16});
  for (int i = 0; i < 16; ++i) y[i] = rng.uniform(-0.8, 0.8);

  AdmmConfig cfg;
  cfg.rho = 0.7;
  cfg.stop_tol = 1e-9;
  cfg.max_iters = 300;
  AdmmResult r = admm_solve(id, y, pixel_l1_prox(lambda), cfg);

  for (int i = 0; i < 16; ++i) {
    double a = std::abs(y[i]) - lambda;
    double expected = a > 0.0 ? std::copysign(a, y[i]) : 0.0;
    CHECK(std::abs(r.x[i] - expected) < 1e-6);
  }
}

TEST_CASE("admm_solve: invertible operator with identity prox recovers the direct solve") {
  const int d = 32;
  LinearOperator op = gaussian_matrix_op(d, 1.0, 23);

  RngStream rng(23);
  Tensor x_true({d});
  for (int i = 0; i < d; ++i) x_true[i] = rng.uniform(-0.9, 0.9);
  Tensor y = op.forward(x_true);

  AdmmConfig cfg;
  cfg.rho = 1e-3;  // no prior to balance: small rho contracts the iteration fast
  cfg.stop_tol = 1e-10;
  cfg.max_iters = 300;
  cfg.cg_tol = 1e-12;
  cfg.cg_max_iters = 2000;
  AdmmResult r = admm_solve(op, y, identity_prox(), cfg);

  Tensor direct = dense_solve(*op.matrix, y);
  for (int i = 0; i < d; ++i) CHECK(std::abs(r.x[i] - direct[i]) < 1e-6);
}

TEST_CASE("admm_solve: trace bookkeeping and final-vs-initial RMSE") {
  LinearOperator op = gaussian_matrix_op(64, 0.5, 29);
  RngStream rng(31);
  Tensor x_true({64});
  for (int i = 0; i < 64; ++i) x_true[i] = rng.uniform(-0.9, 0.9);
  Tensor y = op.forward(x_true);

  AdmmConfig cfg;
  cfg.rho = 0.3;
  cfg.max_iters = 60;
  cfg.stop_tol = 1e-7;
  AdmmResult r = admm_solve(op, y, pixel_l1_prox(0.01), cfg, &x_true);

  REQUIRE(!r.trace.records.empty());
  for (size_t i = 0; i < r.trace.records.size(); ++i) {
    CHECK(r.trace.records[i].iteration == static_cast<int>(i) + 1);
    CHECK(r.trace.records[i].has_psnr);
  }
  if (r.trace.converged)
    CHECK(r.trace.records.back().rmse_xz <= r.trace.records.front().rmse_xz);
  CHECK(!r.trace.diverged);

  // output clamped to [-1, 1]
  for (int i = 0; i < r.x.size(); ++i) {
    CHECK(r.x[i] <= 1.0);
    CHECK(r.x[i] >= -1.0);
  }
}

TEST_CASE("admm_solve: early stop cap and prox contract errors") {
  LinearOperator id = identity_op(4);
  Tensor y({4}, {0.1, 0.2, 0.3, 0.4});

  AdmmConfig cfg;
  cfg.stop_tol = 1e-15;  // unreachable
  cfg.early_stop_at = 3;
  cfg.max_iters = 100;
  AdmmResult r = admm_solve(id, y, pixel_l1_prox(0.5), cfg);
  CHECK(r.trace.records.size() == 3);

  ProxOperator bad{"bad", [](const Tensor&, double) { return Tensor({2}); }};
  CHECK_THROWS_AS(admm_solve(id, y, bad, cfg), ContractError);
}

TEST_CASE("admm_solve: never mutates y or the operator inputs") {
  LinearOperator id = identity_op(4);
  Tensor y({4}, {0.1, -0.2, 0.3, -0.4});
  Tensor y_copy = y;
  AdmmConfig cfg;
  cfg.max_iters = 5;
  admm_solve(id, y, identity_prox(), cfg);
  for (int i = 0; i < 4; ++i) CHECK(y[i] == y_copy[i]);
}

TEST_CASE("denoise_rho preset") {
  CHECK(denoise_rho(40.0) == doctest::Approx(3.0 * 40 / 255));
  CHECK(denoise_rho(0.0) == 0.0);
  CHECK_THROWS_AS(denoise_rho(-1.0), ParameterError);
}
