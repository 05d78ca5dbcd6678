#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gds/model.hpp"
#include "gds/rng.hpp"

namespace gds {

// Planted target: orthonormal frame theta_star whose span carries the signal,
// plus a user-declared orthonormal basis u_hard of the hard latent directions.
// The hard property is an input claim; hard_subspace_check below can only
// falsify it, not certify it.
struct TargetSpec {
  int k = 1;
  int r = 1;
  Eigen::MatrixXd theta_star;  // d x k, orthonormal columns
  Eigen::MatrixXd u_hard;      // k x r, orthonormal columns
  Link link = Link::phase_retrieval();

  int d() const { return static_cast<int>(theta_star.rows()); }
  void validate() const;
};

struct Dataset {
  Eigen::MatrixXd x;   // n x d, i.i.d. standard Gaussian rows
  Eigen::VectorXd y;   // n
  Eigen::VectorXd eps; // n, i.i.d. standard normal, independent of x
  TargetSpec target;
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(x.rows()); }
  int d() const { return static_cast<int>(x.cols()); }
};

// QR-orthonormalized Gaussian frame, sign convention: R diagonal positive.
Eigen::MatrixXd gaussian_orthonormal_frame(int d, int k, RngStream& rng);

TargetSpec sample_target(int d, int k, const Link& link,
                         const Eigen::MatrixXd& u_hard, std::uint64_t seed);

// Convenience for the k = r = 1 case (phase retrieval and friends).
TargetSpec sample_target(int d, const Link& link, std::uint64_t seed);

Dataset sample_dataset(int n, const TargetSpec& target, std::uint64_t seed);

// Orthonormal basis of the complement of span(u) inside R^k (k x (k - r)).
Eigen::MatrixXd orthonormal_complement(const Eigen::MatrixXd& u);

// A test function T(u_y, c_perp, xi): u_y is the rank-transformed response in
// [0, 1], c_perp the coordinates of z in the complement of the candidate
// subspace, xi an auxiliary standard normal.
struct TestFunction {
  std::string name;
  std::function<double(double, const Eigen::VectorXd&, double)> f;
};

// Products of shifted Legendre polynomials (degree <= 3) in the rank
// transform of y with probabilists' Hermite polynomials (degree <= 3) in each
// complement coordinate and in xi, every factor normalized to unit L2 norm
// under its reference law.
std::vector<TestFunction> default_test_bank(int n_perp);

// Monte Carlo estimate of max over the bank of || E[T(y, c_perp, xi) U^T z] ||
// with z ~ N(0, I_k), y = h(z, eps). A value at the MC noise floor is
// evidence (not proof) that span(u_candidate) is hard.
double hard_subspace_check(const Link& link, const Eigen::MatrixXd& u_candidate,
                           int mc, std::uint64_t seed,
                           const std::vector<TestFunction>* bank = nullptr);

// Flat binary container, documented layout (all little-endian):
//   bytes 0..7   magic "GDSDATA1"
//   u64 n, u64 d, u64 k, u64 r, u64 seed
//   u32 link tag length, link tag bytes
//   doubles: x row-major (n*d), y (n), eps (n),
//            theta_star column-major (d*k), u_hard column-major (k*r)
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace gds
