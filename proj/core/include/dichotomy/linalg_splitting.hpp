#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "dichotomy/types.hpp"

namespace dichotomy {

/// Decomposition Z = X ⊕ Y of a square generator into the invariant
/// subspaces below and above a spectral cut.
///
/// Coordinates: a state z splits as z = basis_x·x + basis_y·y, with
/// x = coord_x·z and y = coord_y·z. Rates hold with constant 1 in these
/// coordinates:  ‖exp(t·restricted_gen_x)‖ ≤ e^{mu_s t},
/// ‖exp(−t·restricted_gen_y)‖ ≤ e^{−mu_u t}.
/// Empty blocks carry the sentinels mu_s = −∞, mu_u = +∞.
struct SpectralSplitting {
  int dim_total = 0;
  Mat basis_x;
  Mat basis_y;
  Mat projection_p;
  Mat restricted_gen_x;
  Mat restricted_gen_y;
  double mu_s = 0.0;
  double mu_u = 0.0;
  double c1 = 1.0;
  /// Gram matrices of the working inner products (original Schur bases),
  /// present only after lyapunov_reweight.
  std::optional<Mat> weight_x;
  std::optional<Mat> weight_y;

  Mat coord_x;
  Mat coord_y;

  int dim_x() const { return static_cast<int>(basis_x.cols()); }
  int dim_y() const { return static_cast<int>(basis_y.cols()); }

  Vec assemble(const Vec& x, const Vec& y) const;
};

/// Ordered real Schur split: eigenvalues with Re < cut span X.
SpectralSplitting spectral_split(const Mat& a, double cut, double cut_tol = 1e-8);

/// Split of a block-diagonal generator whose first k coordinates form X.
/// Bases are coordinate unit vectors, so coordinates keep their meaning.
SpectralSplitting block_splitting(const Mat& a, int k);

/// Largest eigenvalue of the symmetric part (−∞ for the 0×0 matrix).
double log_norm_rate(const Mat& a_sub);

/// Largest real part of the spectrum (−∞ for 0×0).
double spectral_abscissa(const Mat& a);

/// (T(t), S(−t)) = (exp(t·G_x), exp(−t·G_y)).
std::pair<Mat, Mat> propagate(const SpectralSplitting& s, double t);

/// Changes the block coordinates so the constant-1 rates sit within
/// `margin` of the spectral abscissae; weights are stored on the result.
SpectralSplitting lyapunov_reweight(const SpectralSplitting& s, double margin);

/// basis·blockdiag(G_x, G_y)·basis⁻¹, i.e. the generator rebuilt from the split.
Mat reassemble(const SpectralSplitting& s);

std::string to_json(const SpectralSplitting& s);
SpectralSplitting splitting_from_json(std::string_view text);

/// Operator 2-norm.
double norm2(const Mat& m);

}  // namespace dichotomy
