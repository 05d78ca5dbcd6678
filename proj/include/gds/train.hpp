#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gds/data.hpp"
#include "gds/model.hpp"
#include "gds/thread_pool.hpp"

namespace gds {

struct TrainConfig {
  double eta = 1.5;
  int t_max = 1000;
  double rho_stop = 0.9;       // correlation gate
  int post_stop_steps = 100;   // extra steps after the gate fires
  double plateau_delta = 0.01; // train-risk flatness threshold
  int plateau_window = 500;    // consecutive steps for the plateau rule
  int test_n = 10000;          // held-out sample size; 0 disables test risk
  std::uint64_t seed = 0;
  int log_every = 1;           // sweep mode uses 10
  double divergence_factor = 1e3;
};

enum class StopReason { kGate, kPlateau, kTMax, kDivergence };

const char* stop_reason_name(StopReason r);

struct TrainRecord {
  int t;
  double rho;
  double train_risk;
  double test_risk;  // NaN when no test set is configured or step unlogged
  double grad_norm;
};

struct TrainTrace {
  std::vector<TrainRecord> records;
  NetworkParams final_params;
  StopReason stop_reason = StopReason::kTMax;
  int steps_taken = 0;
  double final_rho = 0.0;
  double initial_risk = 0.0;
};

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

// Each neuron initialized uniformly on the unit sphere; a = 1, b = 0.
NetworkParams init_params(int d, int m, std::uint64_t seed);

// One full-batch GD step on theta; a, b unchanged. Returns the pre-step risk.
double gd_step(NetworkParams& params, const Activation& act, const Loss& loss,
               const Eigen::Ref<const Eigen::MatrixXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& y, double eta);

// Normalized alignment of each neuron with a frame (d x c): value
// ||frame^T theta_j|| / ||theta_j|| in [0, 1]; zero-norm neurons give 0.
Eigen::VectorXd correlation_per_neuron(const NetworkParams& params,
                                       const Eigen::Ref<const Eigen::MatrixXd>& frame);

double correlation_max(const NetworkParams& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& frame);

// Recovery metric: min over latent directions of the best per-neuron
// alignment with that direction (for k = 1 this is the usual max over
// neurons of |theta_j . theta_*| / ||theta_j||).
double recovery_score(const NetworkParams& params, const TargetSpec& target);

TrainTrace train(const TargetSpec& target, int n, const Activation& act,
                 const Loss& loss, int m, const TrainConfig& cfg);

struct SweepCell {
  int d = 0;
  double delta = 0.0;
  int n = 0;
  int trials = 0;
  double success_mean = 0.0;
  double success_std = 0.0;
  double rho_median = 0.0;
  double rho_p30 = 0.0;
  double rho_p70 = 0.0;
  std::vector<double> final_rhos;
};

// Success-rate phase diagram over (d, delta); trial i of cell c uses the
// seed stream derive_seed(cfg.seed, c * trials + i + 1) so parallel and
// serial execution agree exactly.
std::vector<SweepCell> success_sweep(const std::vector<int>& d_grid,
                                     const std::vector<double>& delta_grid,
                                     int trials, const Activation& act,
                                     const Loss& loss, const Link& link, int m,
                                     const TrainConfig& cfg,
                                     double success_threshold = 0.5,
                                     ThreadPool* pool = nullptr);

}  // namespace gds
