#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include "gds/dmft.hpp"

namespace gds {

// Spectral predictions for matrices of the form (1/n) sum_i g_i x_i x_i^T
// where the weights g follow the sampled law produced by the mean-field
// engine. The bulk is characterized by its Stieltjes transform alpha(z),
// the unique solution of
//     z + 1/alpha = delta * E[ G / (delta + G alpha) ],
// and outliers by the spike equation built from the paired hard-direction
// samples carried in a GLaw.

struct StieltjesSolution {
  std::complex<double> z;
  std::complex<double> alpha;
  double residual = 0.0;
  int iterations = 0;
};

// Solves the self-consistent equation at z by damped fixed-point iteration
// (damping 0.5, start -1/z, tolerance 1e-10 on the equation residual, cap
// 1e4 iterations). For real z the solution is real and positive provided z
// lies strictly below the support; a bracketed bisection on the increasing
// branch backs up the iteration there. Throws NumericalError when z sits
// inside the support or the iteration fails to converge.
StieltjesSolution stieltjes(const Eigen::VectorXd& g_atoms, double delta,
                            std::complex<double> z);
inline StieltjesSolution stieltjes(const GLaw& law, double delta,
                                   std::complex<double> z) {
  return stieltjes(law.g, delta, z);
}

// d(alpha)/dz at a real point on the increasing branch, from implicit
// differentiation: 1 / (1/alpha^2 - delta E[G^2/(delta+G alpha)^2]).
double alpha_prime(const Eigen::VectorXd& g_atoms, double delta, double alpha);

struct LeftEdge {
  double c = 0.0;           // infimum of the limiting bulk support
  double alpha_star = 0.0;  // maximizer of the edge functional
  double a_cap = 0.0;       // upper end of the admissible alpha interval
};

// Left edge of the bulk: c = sup over alpha in (0, A) of
// -1/alpha + delta E[G/(delta+G alpha)], A = delta / max(-min G, 0)
// (A = +inf for nonnegative laws, capped by a large surrogate). The sup is
// located on a 200-point logarithmic grid and refined by golden section.
LeftEdge left_edge(const Eigen::VectorXd& g_atoms, double delta);
inline LeftEdge left_edge(const GLaw& law, double delta) {
  return left_edge(law.g, delta);
}

struct OutlierRoot {
  double z_star = 0.0;
  int multiplicity = 1;
  double omega = 0.0;  // filled by alignment_predict
};

struct OutlierReport {
  std::vector<OutlierRoot> roots;
  double edge_c = 0.0;
  bool exists = false;
  double z_boundary = 0.0;     // min(c, 0) - gap, the rightmost admissible z
  double s_at_boundary = 0.0;  // scalar spike function at the boundary (r=1)
};

// Locates isolated eigenvalues to the left of min(0, c) - gap. For a single
// hard direction the spike function S(z) = -z + E[delta G v^2/(delta+G a(z))]
// is strictly decreasing, so existence reduces to its sign at the boundary
// and the root is found by bisection to 1e-8. For r > 1 the eigenvalue
// branches of the spike matrix are scanned and refined; roots closer than
// 1e-6 merge into a single entry with multiplicity.
OutlierReport outlier_roots(const GLaw& law, double delta, double gap = 0.01);

// Fills omega for every root of the report: the predicted limiting squared
// projection of the outlier eigenvectors onto the hard directions. Returns
// the same values for convenience. Throws NumericalError when a root sits
// too close to the edge for the derivative of alpha to be stable.
std::vector<double> alignment_predict(OutlierReport& report, const GLaw& law,
                                      double delta);

struct ThresholdPoint {
  int t = 0;
  double delta_star = 0.0;
  double delta_star_std = 0.0;
  std::vector<double> per_seed;
  bool infinite = false;  // no outlier up to the bracket cap (delta = 64)
};

// Critical sample ratio at step t: smallest delta for which the step-t
// weight law develops an informative outlier. Per seed, runs the mean-field
// recursion at probe delta values and bisects on the existence flag to the
// requested tolerance; the bracket auto-expands (halving down, doubling up
// to 64). Results are averaged over seeds.
ThresholdPoint threshold_at_t(const DmftConfig& base, int t,
                              double tol = 0.01,
                              const std::vector<std::uint64_t>& seeds = {1},
                              double gap = 0.01, double bracket_lo = 1.0,
                              double bracket_hi = 8.0);

struct ExtrapolationFit {
  double delta_inf = 0.0;
  Eigen::VectorXd coeffs;  // basis {1, 1/t, ..., 1/t^4}, constant term first
  double residual = 0.0;   // rms misfit over the points used
};

// Least-squares fit of delta*(t) against a degree-4 polynomial in 1/t using
// the points with t >= 1 (at least 6 required); the constant term is the
// infinite-time threshold.
ExtrapolationFit extrapolate_inf(const std::vector<std::pair<int, double>>& curve);

// Quantile compression of a weight law to at most max_atoms equal-mass
// atoms; used to keep density scans affordable without touching the
// full-law solves.
Eigen::VectorXd compress_atoms(const Eigen::VectorXd& g, int max_atoms = 1024);

// Predicted bulk CDF on a grid: density recovered from Im alpha(x + i eps)
// with eps = 1e-3 and one Richardson step (2 f_{eps/2} - f_eps), integrated
// by trapezoid. Grid must be increasing and should cover the support.
Eigen::VectorXd predicted_cdf(const Eigen::VectorXd& g_atoms, double delta,
                              const Eigen::VectorXd& grid);

// Piecewise-linear evaluation of a gridded CDF, clamped to [0, 1] outside.
double interp_cdf(const Eigen::VectorXd& grid, const Eigen::VectorXd& cdf,
                  double x);

// Constant-weight special case (all g equal to 1), used as an oracle: the
// classical square-root bulk on [(1-1/sqrt(delta))^2, (1+1/sqrt(delta))^2]
// for delta >= 1.
double mp_left_edge(double delta);
double mp_right_edge(double delta);
double mp_cdf(double x, double delta);

}  // namespace gds
