#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gds/model.hpp"
#include "gds/rng.hpp"
#include "gds/thread_pool.hpp"

namespace gds {

// Joint law of the curvature weight G_t and the hard-projected latent signal,
// the sole input to the spectral predictors.
struct GLaw {
  Eigen::VectorXd g;       // N samples of the weight
  Eigen::MatrixXd v_hard;  // N x r, paired hard-projected signal coordinates
  int j = 0;               // neuron tag
  int t = 0;               // time tag
};

struct DmftConfig {
  Activation act = Activation::gelu();
  Loss loss = Loss::huber(1.0);
  Link link = Link::phase_retrieval();
  double eta = 1.5;
  double delta = 6.0;
  double a0 = 1.0;  // fixed second-layer weight
  double b0 = 0.0;  // fixed bias
  int n_paths = 100000;
  std::uint64_t seed = 0;
};

// Self-consistent kernels of the effective single-coordinate process, stored
// as stacked block matrices over time indices. Correlations C are symmetric
// PSD; responses R vanish for s >= t (theta side) or s > t (loss side).
struct DmftKernels {
  int T = 0;
  int m = 1;
  int k = 1;
  double delta = 0.0;
  double eta = 0.0;
  Eigen::MatrixXd c_theta;       // (T+1)m x (T+1)m
  Eigen::MatrixXd c_theta_star;  // (T+1)m x k
  Eigen::MatrixXd c_ell;         // Tm x Tm (time indices 0..T-1)
  Eigen::MatrixXd r_theta;       // (T+1)m x (T+1)m, blocks (t,s) zero for s >= t
  Eigen::MatrixXd r_ell;         // Tm x Tm, blocks zero for s > t
  Eigen::MatrixXd r_ell_star;    // Tm x k

  Eigen::MatrixXd c_theta_block(int t, int s) const {
    return c_theta.block(t * m, s * m, m, m);
  }
  Eigen::MatrixXd r_theta_block(int t, int s) const {
    return r_theta.block(t * m, s * m, m, m);
  }
  Eigen::MatrixXd c_ell_block(int t, int s) const {
    return c_ell.block(t * m, s * m, m, m);
  }
  Eigen::MatrixXd r_ell_block(int t, int s) const {
    return r_ell.block(t * m, s * m, m, m);
  }
};

// Monte Carlo propagation of the discrete-time effective process for a single
// neuron (m = 1, scalar latent k = 1). Kernel recursion layout:
//   V(t)   = W(t) - (1/delta) sum_{s<t} R_theta(t,s) F(V(s))
//   Th(t+1)= Th(t) - eta sum_{s<=t} R_ell(t,s) Th(s) - eta R_ell_star(t) Th_*
//            + eta Q(t)
// The theta side is linear in (Th(0), Th_*, Q), so its response and
// correlation kernels propagate exactly through the coefficient maps
//   Th(t) = L0(t) Th(0) + Lstar(t) Th_* + sum_{u<t} LQ(t,u) Q(u);
// only the V side is sampled. Each advance draws fresh paths; the W_* draws
// are antithetic pairs sharing the conditional residual of W given W_*, which
// cancels odd-in-signal moments exactly for even links.
class DmftScalar {
 public:
  explicit DmftScalar(const DmftConfig& cfg);

  // Advance kernels to horizon T, then draw the retained path cloud at T.
  void run_to(int T, ThreadPool* pool = nullptr);

  int horizon() const { return t_done_; }
  const DmftConfig& config() const { return cfg_; }

  DmftKernels kernels() const;
  GLaw law_of_g(int t) const;
  double stationarity_gap(int t, int s) const;
  double second_moment_v(int t) const;
  double mean_g(int t) const;
  double c_theta_star_at(int t) const { return lstar_[t]; }

  // Diagnostic propagation of one externally supplied path through the
  // current kernels: preactivations, forces, and the pathwise derivatives
  // dV(t)/dW(s) (jw) and the response-channel dV(s)/dW_* (js). The same
  // recursions feed the kernel estimates, so finite differences on w and
  // wstar validate them directly. Requires t <= horizon().
  struct PathProbe {
    Eigen::VectorXd v, f, fp, dfdy;  // index 0..t
    Eigen::VectorXd jw;              // dV(t)/dW(s) for s = 0..t
    Eigen::VectorXd js;              // dV(s)/dW_* for s = 0..t
  };
  PathProbe probe_path(const Eigen::VectorXd& w, double wstar, double eps,
                       int t) const;

  const Eigen::MatrixXd& cloud_v() const { return cloud_v_; }
  const Eigen::VectorXd& cloud_wstar() const { return cloud_wstar_; }
  const Eigen::VectorXd& cloud_eps() const { return cloud_eps_; }

 private:
  struct Accum {
    Eigen::MatrixXd gram_ff;  // (t+1) x (t+1)
    Eigen::VectorXd rl_row;   // t+1
    double rl_star = 0.0;
  };

  void advance(ThreadPool* pool);
  void final_pass(ThreadPool* pool);
  Eigen::MatrixXd sample_factor(int t) const;
  void propagate_path(int t, const Eigen::VectorXd& w, double wstar, double eps,
                      Eigen::VectorXd& v, Eigen::VectorXd& f,
                      Eigen::VectorXd& fp, Eigen::VectorXd& dfdy) const;
  void signal_jacobian(int t, const Eigen::VectorXd& fp,
                       const Eigen::VectorXd& dfdy, double dh,
                       Eigen::VectorXd& js) const;
  void noise_jacobian(int t, const Eigen::VectorXd& fp,
                      Eigen::VectorXd& jw) const;

  DmftConfig cfg_;
  int t_done_ = 0;
  int n_pairs_ = 0;

  std::vector<double> l0_, lstar_;     // coefficient maps, index 0..t_done
  Eigen::MatrixXd lq_;                 // (t,u), u < t
  Eigen::MatrixXd c_ell_;              // refreshed Gram, indices 0..t_done-1
  Eigen::MatrixXd r_ell_;              // frozen rows
  std::vector<double> r_ell_star_;
  Eigen::MatrixXd c_theta_;            // (t_done+1)^2

  Eigen::MatrixXd cloud_v_;            // N x (T+1)
  Eigen::VectorXd cloud_wstar_, cloud_eps_;
};

// Same recursion for general width m and latent dimension k; used to
// cross-validate the scalar fast path and to exercise the block layout.
class DmftGeneric {
 public:
  DmftGeneric(const DmftConfig& cfg, int m, int k,
              Eigen::VectorXd a = Eigen::VectorXd(),
              Eigen::VectorXd b = Eigen::VectorXd());

  void run_to(int T);
  int horizon() const { return t_done_; }

  DmftKernels kernels() const;
  GLaw law_of_g(int t, int j, const Eigen::MatrixXd& u_hard) const;
  double second_moment_v(int t, int j) const;

 private:
  void advance();
  void final_pass();
  Eigen::MatrixXd sample_factor(int t) const;  // Schur factor of W | W_*
  void propagate_path(int t, const Eigen::MatrixXd& w,
                      const Eigen::VectorXd& wstar, double eps,
                      Eigen::MatrixXd& v, Eigen::MatrixXd& f,
                      std::vector<Eigen::MatrixXd>& dvf,
                      std::vector<Eigen::MatrixXd>& dwf) const;

  DmftConfig cfg_;
  int m_ = 1, k_ = 1;
  Eigen::VectorXd a_, b_;
  int t_done_ = 0;
  int n_pairs_ = 0;

  std::vector<Eigen::MatrixXd> l0_;                 // m x m per time
  std::vector<Eigen::MatrixXd> lstar_;              // m x k per time
  std::vector<std::vector<Eigen::MatrixXd>> lq_;    // [t][u], m x m
  Eigen::MatrixXd c_ell_;                           // stacked Tm x Tm
  std::vector<std::vector<Eigen::MatrixXd>> r_ell_; // [t][s]
  std::vector<Eigen::MatrixXd> r_ell_star_;         // m x k
  Eigen::MatrixXd c_theta_;                         // stacked

  std::vector<Eigen::MatrixXd> cloud_v_;  // per path, m x (T+1)
  Eigen::MatrixXd cloud_wstar_;           // N x k
  Eigen::VectorXd cloud_eps_;
};

}  // namespace gds
