#include "dichotomy/dichotomous_solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "dichotomy/error.hpp"
#include "dichotomy/io.hpp"
#include "json_util.hpp"

namespace dichotomy {

double BaseDynamics::increment(double t1, double t2) const {
  if (!driver) return t2 - t1;
  if (driver_integral) return driver_integral(t1, t2);
  // composite Simpson, 16 panels
  const int n = 16;
  const double h = (t2 - t1) / n;
  double s = driver(t1) + driver(t2);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * driver(t1 + i * h);
  return s * h / 3.0;
}

double EvolutionProblem::rate_s() const {
  const double mu = splitting.mu_s;
  return mu < 0 ? base.driver_min * mu : base.driver_max * mu;
}

double EvolutionProblem::rate_u() const {
  const double mu = splitting.mu_u;
  return mu > 0 ? base.driver_min * mu : base.driver_max * mu;
}

std::pair<double, double> block_lipschitz(const SpectralSplitting& s, double eps) {
  const int n = s.dim_total;
  Mat v(n, n);
  v << s.basis_x, s.basis_y;
  const double scale = norm2(v) * std::sqrt(2.0) * eps;
  return {norm2(s.coord_x) * scale, norm2(s.coord_y) * scale};
}

int SolverOptions::steps_for(double duration) const {
  const double raw = std::ceil(duration * steps_per_unit - 1e-9);
  return std::max(min_steps, static_cast<int>(raw));
}

namespace {

/// Step propagators on a uniform grid: tx[j] advances X from node j to j+1,
/// sy[j] carries Y from node j+1 back to node j.
struct StepOps {
  bool uniform = true;
  std::vector<Mat> tx, sy;
  std::vector<double> ntx, nsy;
  const Mat& T(int j) const { return uniform ? tx[0] : tx[j]; }
  const Mat& S(int j) const { return uniform ? sy[0] : sy[j]; }
  double nT(int j) const { return uniform ? ntx[0] : ntx[j]; }
  double nS(int j) const { return uniform ? nsy[0] : nsy[j]; }
};

std::vector<double> make_grid(double t1, double t2, int n) {
  std::vector<double> tau(n + 1);
  const double h = (t2 - t1) / n;
  for (int j = 0; j <= n; ++j) tau[j] = t1 + j * h;
  tau[n] = t2;
  return tau;
}

StepOps make_ops(const EvolutionProblem& p, const std::vector<double>& tau) {
  StepOps ops;
  const auto& s = p.splitting;
  const int n = static_cast<int>(tau.size()) - 1;
  ops.uniform = p.base.constant();
  const int count = ops.uniform ? 1 : n;
  ops.tx.resize(count);
  ops.sy.resize(count);
  ops.ntx.resize(count);
  ops.nsy.resize(count);
  for (int j = 0; j < count; ++j) {
    const double dphi = ops.uniform ? (tau[1] - tau[0]) : p.base.increment(tau[j], tau[j + 1]);
    ops.tx[j] = s.dim_x() ? Mat((dphi * s.restricted_gen_x).exp()) : Mat(0, 0);
    ops.sy[j] = s.dim_y() ? Mat((-dphi * s.restricted_gen_y).exp()) : Mat(0, 0);
    ops.ntx[j] = norm2(ops.tx[j]);
    ops.nsy[j] = norm2(ops.sy[j]);
  }
  return ops;
}

double kappa_from_ops(const EvolutionProblem& p, const StepOps& ops, int n, double h) {
  double jx = 0.5 * h, cx = 0.0;
  for (int j = 1; j <= n; ++j) {
    jx = ops.nT(j - 1) * jx + h;
    cx = std::max(cx, jx - 0.5 * h);
  }
  double jy = 0.5 * h, cy = 0.0;
  for (int j = n - 1; j >= 0; --j) {
    jy = ops.nS(j) * jy + h;
    cy = std::max(cy, jy - 0.5 * h);
  }
  const double kx = p.splitting.dim_x() ? p.eps_s * cx : 0.0;
  const double ky = p.splitting.dim_y() ? p.eps_u * cy : 0.0;
  return std::max(kx, ky);
}

double colmax_diff(const Mat& a, const Mat& b) {
  if (a.rows() == 0) return 0.0;
  return (a - b).colwise().norm().maxCoeff();
}

}  // namespace

double picard_contraction_estimate(const EvolutionProblem& p, double t1, double t2, int grid_n) {
  const auto tau = make_grid(t1, t2, grid_n);
  const auto ops = make_ops(p, tau);
  return kappa_from_ops(p, ops, grid_n, (t2 - t1) / grid_n);
}

DichotomousTrajectory solve_two_point(const EvolutionProblem& p, const Vec& x1, const Vec& y2, double t1, double t2,
                                      int grid_n, double tol, int max_iter) {
  const auto& s = p.splitting;
  const int k = s.dim_x(), m = s.dim_y(), nd = s.dim_total;
  if (x1.size() != k || y2.size() != m)
    throw Error(ErrorKind::BoundaryDimensionMismatch, "boundary data do not match the splitting");
  if (!(t2 > t1)) throw Error(ErrorKind::NegativeTime, "two-point solve needs t1 < t2", t2 - t1);
  if (grid_n < 1) throw Error(ErrorKind::ParamOutOfRange, "grid_n must be positive");

  const int n = grid_n;
  const double h = (t2 - t1) / n;
  DichotomousTrajectory tr;
  tr.times = make_grid(t1, t2, n);
  const StepOps ops = make_ops(p, tr.times);
  tr.kappa = p.nonlinearity ? kappa_from_ops(p, ops, n, h) : 0.0;
  if (tr.kappa >= 1.0) throw Error(ErrorKind::NonContraction, "Picard operator is not a contraction", tr.kappa);

  Mat xl(k, n + 1), yl(m, n + 1);
  xl.col(0) = x1;
  for (int j = 1; j <= n; ++j) xl.col(j).noalias() = ops.T(j - 1) * xl.col(j - 1);
  yl.col(n) = y2;
  for (int j = n - 1; j >= 0; --j) yl.col(j).noalias() = ops.S(j) * yl.col(j + 1);

  tr.x = xl;
  tr.y = yl;
  tr.z.resize(nd, n + 1);
  tr.z.noalias() = s.basis_x * tr.x;
  tr.z.noalias() += s.basis_y * tr.y;

  if (!p.nonlinearity) {
    tr.iteration_count = 0;
    tr.picard_residual = 0.0;
    return tr;
  }

  Mat g(nd, n + 1), gx(k, n + 1), gy(m, n + 1), xn(k, n + 1), yn(m, n + 1);
  Vec zb(nd), gb(nd), acc_x(k), acc_y(m), tmp_x(k), tmp_y(m);
  for (int it = 1;; ++it) {
    for (int j = 0; j <= n; ++j) {
      zb = tr.z.col(j);
      gb.setZero();
      p.nonlinearity(tr.times[j], zb, gb);
      g.col(j) = gb;
    }
    gx.noalias() = s.coord_x * g;
    gy.noalias() = s.coord_y * g;

    acc_x = 0.5 * h * gx.col(0);
    xn.col(0) = x1;
    for (int j = 1; j <= n; ++j) {
      tmp_x.noalias() = ops.T(j - 1) * acc_x;
      acc_x = tmp_x + h * gx.col(j);
      xn.col(j) = xl.col(j) + acc_x - 0.5 * h * gx.col(j);
    }
    acc_y = 0.5 * h * gy.col(n);
    yn.col(n) = y2;
    for (int j = n - 1; j >= 0; --j) {
      tmp_y.noalias() = ops.S(j) * acc_y;
      acc_y = tmp_y + h * gy.col(j);
      yn.col(j) = yl.col(j) - (acc_y - 0.5 * h * gy.col(j));
    }

    const double inc = std::max(colmax_diff(xn, tr.x), colmax_diff(yn, tr.y));
    tr.x.swap(xn);
    tr.y.swap(yn);
    tr.z.noalias() = s.basis_x * tr.x;
    tr.z.noalias() += s.basis_y * tr.y;
    tr.increments.push_back(inc);
    tr.iteration_count = it;
    tr.picard_residual = inc;
    if (inc <= tol) break;
    if (it >= max_iter) throw Error(ErrorKind::MaxIterExceeded, "Picard iteration did not reach tolerance", inc);
  }
  return tr;
}

std::pair<Vec, Vec> generating_cocycle_eval(const EvolutionProblem& p, double s, double omega, const Vec& x1,
                                            const Vec& y2, const SolverOptions& opts) {
  if (s < 0) throw Error(ErrorKind::NegativeTime, "generating cocycle needs s >= 0", s);
  if (x1.size() != p.splitting.dim_x() || y2.size() != p.splitting.dim_y())
    throw Error(ErrorKind::BoundaryDimensionMismatch, "boundary data do not match the splitting");
  if (s == 0.0) return {x1, y2};
  const auto tr = solve_two_point(p, x1, y2, omega, omega + s, opts.steps_for(s), opts.tol, opts.max_iter);
  return {tr.x.col(tr.x.cols() - 1), tr.y.col(0)};
}

GeneratingCorrespondence cocycle_correspondence(const EvolutionProblem& p, double s, double omega,
                                                const SolverOptions& opts) {
  const int k = p.splitting.dim_x(), m = p.splitting.dim_y();
  return GeneratingCorrespondence({k, m, k, m}, [p, s, omega, opts](const Vec& x1, const Vec& y2) {
    return generating_cocycle_eval(p, s, omega, x1, y2, opts);
  });
}

double verify_mild_solution(DichotomousTrajectory& traj, const EvolutionProblem& p, double tol) {
  const auto& t = traj.times;
  const int n = static_cast<int>(t.size()) - 1;
  if (n < 1) throw Error(ErrorKind::NonUniformGrid, "trajectory needs at least two nodes");
  const double h = (t.back() - t.front()) / n;
  for (int j = 1; j <= n; ++j)
    if (std::abs((t[j] - t[j - 1]) - h) > 1e-9 * std::max(1.0, std::abs(h)))
      throw Error(ErrorKind::NonUniformGrid, "trajectory grid is not uniform");
  const int nd = static_cast<int>(traj.z.rows());
  Vec zb(nd), gb(nd), rhs_prev(nd), rhs(nd), integral = Vec::Zero(nd);
  auto eval_rhs = [&](int j, Vec& out) {
    zb = traj.z.col(j);
    const double a = p.base.driver ? p.base.driver(t[j]) : 1.0;
    out.noalias() = a * (p.generator * zb);
    if (p.nonlinearity) {
      gb.setZero();
      p.nonlinearity(t[j], zb, gb);
      out += gb;
    }
  };
  eval_rhs(0, rhs_prev);
  double res = 0.0;
  for (int j = 1; j <= n; ++j) {
    eval_rhs(j, rhs);
    integral += 0.5 * h * (rhs_prev + rhs);
    res = std::max(res, (traj.z.col(j) - traj.z.col(0) - integral).norm());
    rhs_prev = rhs;
  }
  traj.mild_residual = res;
  (void)tol;
  return res;
}

Vec wellposed_cocycle_eval(const EvolutionProblem& p, double t, double omega, const Vec& x, const SolverOptions& opts) {
  if (!p.well_posed) throw Error(ErrorKind::IllPosedProblem, "forward initial-value solving is not available");
  if (t < 0) throw Error(ErrorKind::NegativeTime, "cocycle time must be nonnegative", t);
  if (x.size() != p.dim()) throw Error(ErrorKind::BoundaryDimensionMismatch, "initial state dimension");
  if (t == 0.0) return x;
  const int n = opts.steps_for(t);
  const double h = t / n;
  const auto tau = make_grid(omega, omega + t, n);
  const int nd = p.dim();
  std::vector<Mat> e(p.base.constant() ? 1 : n);
  for (std::size_t j = 0; j < e.size(); ++j)
    e[j] = (p.base.increment(tau[j], tau[j + 1]) * p.generator).exp();
  auto E = [&](int j) -> const Mat& { return p.base.constant() ? e[0] : e[j]; };
  if (!p.nonlinearity) {
    Vec z = x;
    for (int j = 0; j < n; ++j) z = E(j) * z;
    return z;
  }
  Vec z0 = x;
  Vec zb(nd), gb(nd), acc(nd), tmp(nd);
  int j0 = 0;
  while (j0 < n) {
    // greedy chunk: keep the discrete convolution bound below 1/2
    int j1 = j0;
    double bound = 0.5 * h;
    while (j1 < n) {
      const double nb = norm2(E(j1)) * bound + h;
      if (p.eps * (nb - 0.5 * h) > 0.5 && j1 > j0) break;
      bound = nb;
      ++j1;
    }
    const int len = j1 - j0;
    Mat zl(nd, len + 1), zc(nd, len + 1), zn(nd, len + 1), g(nd, len + 1);
    zl.col(0) = z0;
    for (int i = 1; i <= len; ++i) zl.col(i).noalias() = E(j0 + i - 1) * zl.col(i - 1);
    zc = zl;
    for (int it = 1;; ++it) {
      for (int i = 0; i <= len; ++i) {
        zb = zc.col(i);
        gb.setZero();
        p.nonlinearity(tau[j0 + i], zb, gb);
        g.col(i) = gb;
      }
      acc = 0.5 * h * g.col(0);
      zn.col(0) = z0;
      for (int i = 1; i <= len; ++i) {
        tmp.noalias() = E(j0 + i - 1) * acc;
        acc = tmp + h * g.col(i);
        zn.col(i) = zl.col(i) + acc - 0.5 * h * g.col(i);
      }
      const double inc = (zn - zc).colwise().norm().maxCoeff();
      zc.swap(zn);
      if (inc <= opts.tol) break;
      if (it >= opts.max_iter) throw Error(ErrorKind::MaxIterExceeded, "forward Picard iteration", inc);
    }
    z0 = zc.col(len);
    j0 = j1;
  }
  return z0;
}

LipschitzEstimate estimate_nonlinearity_lipschitz(const EvolutionProblem& p, double radius, std::size_t n_pairs,
                                                  std::uint64_t seed, double t) {
  LipschitzEstimate est;
  if (!p.nonlinearity) return est;
  const int nd = p.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto ball = [&](double r) {
    Vec v(nd);
    for (int i = 0; i < nd; ++i) v(i) = normal(rng);
    return Vec(v * (r * std::pow(unif(rng), 1.0 / nd) / v.norm()));
  };
  Vec fa(nd), fb(nd);
  const auto& s = p.splitting;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const Vec a = ball(radius);
    // alternate between local and wide pairs
    const Vec b = (i % 2) ? ball(radius) : Vec(a + ball(radius * 1e-3));
    fa.setZero();
    fb.setZero();
    p.nonlinearity(t, a, fa);
    p.nonlinearity(t, b, fb);
    if (!fa.allFinite() || !fb.allFinite()) est.finite = false;
    const Vec dz = a - b, df = fa - fb;
    const double nz = dz.norm();
    if (nz == 0.0) continue;
    est.ambient = std::max(est.ambient, df.norm() / nz);
    const double mx = max_norm(s.coord_x * dz, s.coord_y * dz);
    if (mx > 0) {
      if (s.dim_x()) est.block_s = std::max(est.block_s, (s.coord_x * df).norm() / mx);
      if (s.dim_y()) est.block_u = std::max(est.block_u, (s.coord_y * df).norm() / mx);
    }
  }
  return est;
}

std::string DichotomousTrajectory::to_csv() const {
  std::vector<std::string> header{"t"};
  for (Eigen::Index i = 0; i < z.rows(); ++i) header.push_back("z" + std::to_string(i));
  header.push_back("x_norm");
  header.push_back("y_norm");
  std::vector<std::vector<double>> rows;
  rows.reserve(times.size());
  for (std::size_t j = 0; j < times.size(); ++j) {
    std::vector<double> row{times[j]};
    for (Eigen::Index i = 0; i < z.rows(); ++i) row.push_back(z(i, j));
    row.push_back(x.rows() ? x.col(j).norm() : 0.0);
    row.push_back(y.rows() ? y.col(j).norm() : 0.0);
    rows.push_back(std::move(row));
  }
  return io::csv_table(header, rows);
}

std::string DichotomousTrajectory::report_json() const {
  detail::json j;
  j["kappa"] = kappa;
  j["iterations"] = iteration_count;
  j["picard_residual"] = picard_residual;
  j["mild_residual"] = mild_residual;
  j["grid_n"] = times.empty() ? 0 : times.size() - 1;
  return j.dump(2);
}

}  // namespace dichotomy
