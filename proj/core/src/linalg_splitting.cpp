#include "dichotomy/linalg_splitting.hpp"

#include <lapacke.h>

#include <cmath>
#include <limits>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "dichotomy/error.hpp"
#include "json_util.hpp"

namespace dichotomy {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double min_sym_eig(const Mat& a) {
  if (a.rows() == 0) return kInf;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void finish(SpectralSplitting& s) {
  const int n = s.dim_total;
  Mat v(n, n);
  v << s.basis_x, s.basis_y;
  const Mat vinv = v.inverse();
  s.coord_x = vinv.topRows(s.dim_x());
  s.coord_y = vinv.bottomRows(s.dim_y());
  s.projection_p = s.basis_x * s.coord_x;
  s.mu_s = log_norm_rate(s.restricted_gen_x);
  s.mu_u = min_sym_eig(s.restricted_gen_y);
  const Mat q = Mat::Identity(n, n) - s.projection_p;
  s.c1 = std::max({1.0, norm2(s.projection_p), norm2(q)});
}

/// Solves (G − rI)ᵀW + W(G − rI) = −I by Kronecker vectorization.
Mat lyapunov_weight(const Mat& g, double r) {
  const Eigen::Index k = g.rows();
  const Mat gs = g - r * Mat::Identity(k, k);
  const Mat id = Mat::Identity(k, k);
  Mat kron(k * k, k * k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      // vec(GᵀW) = (I ⊗ Gᵀ) vec W,  vec(WG) = (Gᵀ ⊗ I) vec W
      kron.block(i * k, j * k, k, k) = id(i, j) * gs.transpose() + gs(j, i) * id;
    }
  Vec rhs = -Eigen::Map<const Vec>(id.data(), k * k);
  Vec w = kron.fullPivLu().solve(rhs);
  Mat wm = Eigen::Map<Mat>(w.data(), k, k);
  return 0.5 * (wm + wm.transpose());
}

}  // namespace

double norm2(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

Vec SpectralSplitting::assemble(const Vec& x, const Vec& y) const {
  Vec z = Vec::Zero(dim_total);
  if (x.size()) z += basis_x * x;
  if (y.size()) z += basis_y * y;
  return z;
}

double log_norm_rate(const Mat& a_sub) {
  if (a_sub.rows() != a_sub.cols()) throw Error(ErrorKind::DimensionMismatch, "log_norm_rate needs a square matrix");
  if (a_sub.rows() == 0) return -kInf;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a_sub + a_sub.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double spectral_abscissa(const Mat& a) {
  if (a.rows() == 0) return -kInf;
  Eigen::EigenSolver<Mat> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

SpectralSplitting spectral_split(const Mat& a, double cut, double cut_tol) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::DimensionMismatch, "spectral_split needs a square matrix");
  const lapack_int n = static_cast<lapack_int>(a.rows());
  SpectralSplitting s;
  s.dim_total = n;
  if (n == 0) {
    s.basis_x = s.basis_y = s.projection_p = Mat(0, 0);
    s.restricted_gen_x = s.restricted_gen_y = Mat(0, 0);
    finish(s);
    return s;
  }

  Mat t = a;
  Mat u(n, n);
  std::vector<double> wr(n), wi(n);
  lapack_int sdim = 0;
  lapack_int info = LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'N', nullptr, n, t.data(), n, &sdim, wr.data(),
                                  wi.data(), u.data(), n);
  if (info != 0) throw Error(ErrorKind::NonConvergence, "real Schur decomposition failed", info);

  std::vector<lapack_logical> select(n);
  for (lapack_int i = 0; i < n; ++i) {
    if (std::abs(wr[i] - cut) < cut_tol)
      throw Error(ErrorKind::EigenvalueOnCut, "eigenvalue real part within tolerance of the cut", wr[i]);
    select[i] = wr[i] < cut ? 1 : 0;
  }
  lapack_int k = 0;
  double s_cond = 0.0, sep = 0.0;
  // explicit workspaces: the high-level wrapper mis-sizes them for job 'N'
  const lapack_int lwork = std::max<lapack_int>(1, n * n), liwork = std::max<lapack_int>(1, n * n);
  std::vector<double> work(lwork);
  std::vector<lapack_int> iwork(liwork);
  info = LAPACKE_dtrsen_work(LAPACK_COL_MAJOR, 'N', 'V', select.data(), n, t.data(), n, u.data(), n, wr.data(),
                             wi.data(), &k, &s_cond, &sep, work.data(), lwork, iwork.data(), liwork);
  if (info != 0) throw Error(ErrorKind::NonConvergence, "Schur reordering failed", info);

  const lapack_int m = n - k;
  const Mat u1 = u.leftCols(k);
  const Mat u2 = u.rightCols(m);
  Mat r = Mat::Zero(k, m);
  if (k > 0 && m > 0) {
    Mat t11 = t.topLeftCorner(k, k);
    Mat t22 = t.bottomRightCorner(m, m);
    r = -t.topRightCorner(k, m);
    double scale = 1.0;
    info = LAPACKE_dtrsyl(LAPACK_COL_MAJOR, 'N', 'N', -1, k, m, t11.data(), k, t22.data(), m, r.data(), k, &scale);
    if (info < 0) throw Error(ErrorKind::NonConvergence, "Sylvester solve failed", info);
    r /= scale;
  }
  s.basis_x = u1;
  if (m > 0) {
    const Mat v = u1 * r + u2;
    Eigen::HouseholderQR<Mat> qr(v);
    s.basis_y = qr.householderQ() * Mat::Identity(n, m);
  } else {
    s.basis_y = Mat(n, 0);
  }
  s.restricted_gen_x = t.topLeftCorner(k, k);
  s.restricted_gen_y = s.basis_y.transpose() * a * s.basis_y;
  finish(s);
  return s;
}

SpectralSplitting block_splitting(const Mat& a, int k) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n || k < 0 || k > n) throw Error(ErrorKind::DimensionMismatch, "block_splitting dimensions");
  const int m = n - k;
  if (k > 0 && m > 0 && (a.topRightCorner(k, m).norm() > 0.0 || a.bottomLeftCorner(m, k).norm() > 0.0))
    throw Error(ErrorKind::DimensionMismatch, "block_splitting needs a block-diagonal generator");
  SpectralSplitting s;
  s.dim_total = n;
  s.basis_x = Mat::Identity(n, n).leftCols(k);
  s.basis_y = Mat::Identity(n, n).rightCols(m);
  s.restricted_gen_x = a.topLeftCorner(k, k);
  s.restricted_gen_y = a.bottomRightCorner(m, m);
  finish(s);
  return s;
}

std::pair<Mat, Mat> propagate(const SpectralSplitting& s, double t) {
  if (t < 0) throw Error(ErrorKind::NegativeTime, "propagate needs t >= 0", t);
  Mat ox = s.dim_x() ? Mat((t * s.restricted_gen_x).exp()) : Mat(0, 0);
  Mat oy = s.dim_y() ? Mat((-t * s.restricted_gen_y).exp()) : Mat(0, 0);
  return {ox, oy};
}

SpectralSplitting lyapunov_reweight(const SpectralSplitting& s, double margin) {
  if (!(margin > 0)) throw Error(ErrorKind::ParamOutOfRange, "reweight margin must be positive", margin);
  SpectralSplitting w = s;
  auto reweigh = [&](const Mat& g, Mat& basis, Mat& gen, std::optional<Mat>& weight) {
    if (g.rows() == 0) return;
    const double r = spectral_abscissa(g) + margin;
    const Mat wm = lyapunov_weight(g, r);
    Eigen::LLT<Mat> llt(wm);
    const Mat l = llt.matrixL();
    const Mat lt_inv = l.transpose().inverse();
    // new coordinates x' = Lᵀx, so |x'| is the W-norm of x
    basis = basis * lt_inv;
    gen = l.transpose() * g * lt_inv;
    weight = wm;
  };
  reweigh(s.restricted_gen_x, w.basis_x, w.restricted_gen_x, w.weight_x);
  // growth of −G_y is what S(−t) sees
  if (s.dim_y()) {
    Mat neg = -s.restricted_gen_y;
    Mat basis = w.basis_y;
    reweigh(neg, basis, neg, w.weight_y);
    w.basis_y = basis;
    w.restricted_gen_y = -neg;
  }
  finish(w);
  return w;
}

Mat reassemble(const SpectralSplitting& s) {
  const int n = s.dim_total;
  Mat v(n, n);
  v << s.basis_x, s.basis_y;
  Mat blk = Mat::Zero(n, n);
  blk.topLeftCorner(s.dim_x(), s.dim_x()) = s.restricted_gen_x;
  blk.bottomRightCorner(s.dim_y(), s.dim_y()) = s.restricted_gen_y;
  return v * blk * v.inverse();
}

std::string to_json(const SpectralSplitting& s) {
  using detail::json;
  json j;
  j["dim_total"] = s.dim_total;
  j["basis_x"] = detail::mat_to_json(s.basis_x);
  j["basis_y"] = detail::mat_to_json(s.basis_y);
  j["projection_p"] = detail::mat_to_json(s.projection_p);
  j["restricted_gen_x"] = detail::mat_to_json(s.restricted_gen_x);
  j["restricted_gen_y"] = detail::mat_to_json(s.restricted_gen_y);
  j["mu_s"] = detail::real_to_json(s.mu_s);
  j["mu_u"] = detail::real_to_json(s.mu_u);
  j["c1"] = s.c1;
  if (s.weight_x) j["weight_x"] = detail::mat_to_json(*s.weight_x);
  if (s.weight_y) j["weight_y"] = detail::mat_to_json(*s.weight_y);
  return j.dump();
}

SpectralSplitting splitting_from_json(std::string_view text) {
  const auto j = detail::json::parse(text);
  SpectralSplitting s;
  s.dim_total = j.at("dim_total").get<int>();
  s.basis_x = detail::mat_from_json(j.at("basis_x"));
  s.basis_y = detail::mat_from_json(j.at("basis_y"));
  if (s.basis_x.rows() == 0) s.basis_x.resize(s.dim_total, 0);
  if (s.basis_y.rows() == 0) s.basis_y.resize(s.dim_total, 0);
  s.restricted_gen_x = detail::mat_from_json(j.at("restricted_gen_x"));
  s.restricted_gen_y = detail::mat_from_json(j.at("restricted_gen_y"));
  if (j.contains("weight_x")) s.weight_x = detail::mat_from_json(j.at("weight_x"));
  if (j.contains("weight_y")) s.weight_y = detail::mat_from_json(j.at("weight_y"));
  finish(s);
  s.projection_p = detail::mat_from_json(j.at("projection_p"));
  s.mu_s = detail::real_from_json(j.at("mu_s"));
  s.mu_u = detail::real_from_json(j.at("mu_u"));
  s.c1 = j.at("c1").get<double>();
  return s;
}

}  // namespace dichotomy
