#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "gds/data.hpp"
#include "gds/model.hpp"

namespace gds {

// Weighted sample covariance H = (1/n) X^T diag(g) X held in factored form;
// dense materialization on demand for moderate dimension.
class HessianBlock {
 public:
  HessianBlock() = default;
  HessianBlock(std::shared_ptr<const Eigen::MatrixXd> x, Eigen::VectorXd g);

  int dim() const { return x_ ? static_cast<int>(x_->cols()) : 0; }
  int n() const { return x_ ? static_cast<int>(x_->rows()) : 0; }
  const Eigen::VectorXd& weights() const { return g_; }
  const Eigen::MatrixXd& samples() const { return *x_; }

  void apply(const Eigen::Ref<const Eigen::VectorXd>& v,
             Eigen::VectorXd& out) const;
  double quad_form(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::MatrixXd dense(int budget = 2500) const;

 private:
  std::shared_ptr<const Eigen::MatrixXd> x_;
  Eigen::VectorXd g_;
};

// Per-sample curvature weights for neuron block j along the current iterate.
Eigen::VectorXd hessian_weights(const NetworkParams& params, const Activation& act,
                                const Loss& loss,
                                const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& y, int j);

HessianBlock hessian_block(const NetworkParams& params, const Activation& act,
                           const Loss& loss,
                           std::shared_ptr<const Eigen::MatrixXd> x,
                           const Eigen::Ref<const Eigen::VectorXd>& y, int j);

// Dense md x md Hessian of the empirical risk in theta, assembled from the
// outer-product curvature term and the block-diagonal first-order term.
Eigen::MatrixXd full_hessian(const NetworkParams& params, const Activation& act,
                             const Loss& loss,
                             const Eigen::Ref<const Eigen::MatrixXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& y,
                             int budget = 4000);

struct EigenResult {
  Eigen::VectorXd values;     // p smallest, ascending
  Eigen::MatrixXd vectors;    // dim x p, orthonormal
  Eigen::VectorXd residuals;  // ||H v - lambda v|| per pair
  int matvecs = 0;
};

EigenResult smallest_eigenpairs(const Eigen::Ref<const Eigen::MatrixXd>& dense,
                                int p);

// Factored path: Lanczos with full reorthogonalization; converges the p
// algebraically smallest Ritz pairs to residual <= tol * ||H||, capped at
// max_matvecs products (default 10 * dim).
EigenResult smallest_eigenpairs(const HessianBlock& block, int p,
                                std::uint64_t seed = 12345, double tol = 1e-8,
                                int max_matvecs = 0);

EigenResult smallest_eigenpairs_op(
    const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& op,
    int dim, int p, std::uint64_t seed = 12345, double tol = 1e-8,
    int max_matvecs = 0);

// Total squared projection of the given orthonormal vectors onto the column
// span of frame (sum over vectors of ||frame^T xi||^2).
double alignment(const Eigen::Ref<const Eigen::MatrixXd>& eigvecs,
                 const Eigen::Ref<const Eigen::MatrixXd>& frame);

struct SandwichReport {
  double lhs = 0.0;   // min over blocks of lambda_min(a_j H_j)
  double mid = 0.0;   // lambda_min of m times the full risk Hessian
  double slack = 0.0; // measured constant C, bound is lhs + C / m
  bool lower_ok = false;
  bool upper_ok = false;
};

SandwichReport sandwich_check(const NetworkParams& params, const Activation& act,
                              const Loss& loss,
                              const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y);

struct Histogram {
  std::vector<double> edges;   // bins + 1
  std::vector<double> density; // normalized to integrate to 1
  std::vector<double> eigenvalues;  // ascending
};

Histogram esd(const Eigen::Ref<const Eigen::MatrixXd>& dense, int bins);

// Kolmogorov-Smirnov distance between the empirical law of sorted_vals and a
// reference CDF.
double ks_distance(const std::vector<double>& sorted_vals,
                   const std::function<double(double)>& cdf);

// Simplified spiked model: H = (1/n) sum Gamma(y_i, zeta_i) x_i x_i^T with
// zeta uniform(0,1) independent of (x, y) and n = round(delta * d).
struct SpikedModel {
  HessianBlock block;
  TargetSpec target;
  Eigen::VectorXd y;
  Eigen::VectorXd zeta;
};

SpikedModel spiked_sample(const std::function<double(double, double)>& preproc,
                          const Link& link, double delta, int d,
                          std::uint64_t seed);

}  // namespace gds
