#include "gds/train.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "gds/errors.hpp"

namespace gds {

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kGate: return "gate";
    case StopReason::kPlateau: return "plateau";
    case StopReason::kTMax: return "t_max";
    case StopReason::kDivergence: return "divergence";
  }
  return "unknown";
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  return splitmix64(base ^ (salt * 0x9E3779B97F4A7C15ull));
}

NetworkParams init_params(int d, int m, std::uint64_t seed) {
  if (d < 1 || m < 1) throw ConfigError("init_params: d, m must be >= 1");
  RngStream rng(seed, make_stream(StreamDomain::kInit, 0, 0));
  Eigen::MatrixXd theta(d, m);
  for (int j = 0; j < m; ++j) {
    double norm2 = 0.0;
    for (int i = 0; i < d; ++i) {
      theta(i, j) = rng.normal();
      norm2 += theta(i, j) * theta(i, j);
    }
    theta.col(j) /= std::sqrt(norm2);
  }
  return NetworkParams::make(theta);
}

double gd_step(NetworkParams& params, const Activation& act, const Loss& loss,
               const Eigen::Ref<const Eigen::MatrixXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& y, double eta) {
  if (!(eta > 0.0)) throw ConfigError("gd_step: eta must be positive");
  RiskGrad rg = risk_and_grad(params, act, loss, x, y);
  if (!rg.grad.allFinite())
    throw NumericalError("gd_step: non-finite gradient (diverged)");
  params.theta -= eta * rg.grad;
  return rg.risk;
}

Eigen::VectorXd correlation_per_neuron(const NetworkParams& params,
                                       const Eigen::Ref<const Eigen::MatrixXd>& frame) {
  if (frame.rows() != params.theta.rows())
    throw ConfigError("correlation: frame dimension mismatch");
  const int m = params.m();
  Eigen::MatrixXd proj = frame.transpose() * params.theta;  // c x m
  Eigen::VectorXd rho(m);
  for (int j = 0; j < m; ++j) {
    const double nrm = params.theta.col(j).norm();
    rho[j] = nrm > 0.0 ? std::min(1.0, proj.col(j).norm() / nrm) : 0.0;
  }
  return rho;
}

double correlation_max(const NetworkParams& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& frame) {
  return correlation_per_neuron(params, frame).maxCoeff();
}

double recovery_score(const NetworkParams& params, const TargetSpec& target) {
  const int m = params.m();
  double score = std::numeric_limits<double>::infinity();
  for (int q = 0; q < target.k; ++q) {
    double best = 0.0;
    for (int j = 0; j < m; ++j) {
      const double nrm = params.theta.col(j).norm();
      if (nrm == 0.0) continue;
      best = std::max(best,
                      std::abs(target.theta_star.col(q).dot(params.theta.col(j))) / nrm);
    }
    score = std::min(score, best);
  }
  return std::min(score, 1.0);
}

TrainTrace train(const TargetSpec& target, int n, const Activation& act,
                 const Loss& loss, int m, const TrainConfig& cfg) {
  if (cfg.t_max < 1) throw ConfigError("train: t_max must be >= 1");
  check_loss_link(loss, target.link);
  const int d = target.d();

  Dataset tr = sample_dataset(n, target, derive_seed(cfg.seed, 1));
  Dataset te;
  const bool has_test = cfg.test_n > 0;
  if (has_test) te = sample_dataset(cfg.test_n, target, derive_seed(cfg.seed, 2));

  NetworkParams params = init_params(d, m, derive_seed(cfg.seed, 3));

  TrainTrace trace;
  trace.records.reserve(static_cast<std::size_t>(cfg.t_max / cfg.log_every) + 2);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::deque<double> risk_window;
  int gate_armed_at = -1;
  double initial_risk = nan;

  for (int t = 0; t <= cfg.t_max; ++t) {
    RiskGrad rg;
    bool finite = true;
    try {
      rg = risk_and_grad(params, act, loss, tr.x, tr.y);
    } catch (const std::domain_error&) {
      finite = false;
    }
    if (!finite || !std::isfinite(rg.risk) || !rg.grad.allFinite()) {
      trace.stop_reason = StopReason::kDivergence;
      trace.steps_taken = t;
      break;
    }
    if (t == 0) initial_risk = rg.risk;

    const double rho = correlation_max(params, target.theta_star);
    const bool log_now = (t % cfg.log_every == 0) || t == cfg.t_max;
    double test_risk = nan;
    if (log_now && has_test) test_risk = risk_only(params, act, loss, te.x, te.y);
    if (log_now)
      trace.records.push_back({t, rho, rg.risk, test_risk, rg.grad.norm()});
    trace.final_rho = rho;
    trace.steps_taken = t;

    if (rg.risk > cfg.divergence_factor * initial_risk && t > 0) {
      trace.stop_reason = StopReason::kDivergence;
      break;
    }
    if (gate_armed_at < 0 && rho >= cfg.rho_stop) gate_armed_at = t;
    if (gate_armed_at >= 0 && t >= gate_armed_at + cfg.post_stop_steps) {
      trace.stop_reason = StopReason::kGate;
      break;
    }
    if (gate_armed_at < 0) {
      risk_window.push_back(rg.risk);
      if (static_cast<int>(risk_window.size()) > cfg.plateau_window + 1)
        risk_window.pop_front();
      if (static_cast<int>(risk_window.size()) == cfg.plateau_window + 1) {
        const auto [lo, hi] =
            std::minmax_element(risk_window.begin(), risk_window.end());
        if (*hi - *lo < cfg.plateau_delta) {
          trace.stop_reason = StopReason::kPlateau;
          break;
        }
      }
    }
    if (t == cfg.t_max) {
      trace.stop_reason = StopReason::kTMax;
      break;
    }
    params.theta -= cfg.eta * rg.grad;
  }

  trace.final_params = std::move(params);
  trace.initial_risk = initial_risk;
  return trace;
}

namespace {

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p * (static_cast<double>(v.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double w = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - w) + v[lo + 1] * w;
}

}  // namespace

std::vector<SweepCell> success_sweep(const std::vector<int>& d_grid,
                                     const std::vector<double>& delta_grid,
                                     int trials, const Activation& act,
                                     const Loss& loss, const Link& link, int m,
                                     const TrainConfig& cfg,
                                     double success_threshold,
                                     ThreadPool* pool) {
  if (trials < 1) throw ConfigError("success_sweep: trials must be >= 1");
  if (d_grid.empty() || delta_grid.empty())
    throw ConfigError("success_sweep: empty grid");

  struct Task {
    int cell;
    int d;
    double delta;
    std::uint64_t seed;
  };
  std::vector<SweepCell> cells;
  std::vector<Task> tasks;
  int cell_idx = 0;
  for (int d : d_grid) {
    for (double delta : delta_grid) {
      SweepCell c;
      c.d = d;
      c.delta = delta;
      c.n = static_cast<int>(std::lround(delta * d));
      c.trials = trials;
      c.final_rhos.resize(trials, 0.0);
      cells.push_back(std::move(c));
      for (int i = 0; i < trials; ++i) {
        const std::uint64_t salt =
            static_cast<std::uint64_t>(cell_idx) * static_cast<std::uint64_t>(trials) +
            static_cast<std::uint64_t>(i) + 1;
        tasks.push_back({cell_idx, d, delta, derive_seed(cfg.seed, salt)});
      }
      ++cell_idx;
    }
  }

  std::vector<double> rho_out(tasks.size(), 0.0);
  auto run_task = [&](std::size_t ti) {
    const Task& task = tasks[ti];
    TargetSpec target = sample_target(task.d, link.k(), link,
                                      Eigen::MatrixXd::Identity(link.k(), link.k()),
                                      derive_seed(task.seed, 77));
    TrainConfig tcfg = cfg;
    tcfg.seed = task.seed;
    TrainTrace trace = train(target, cells[task.cell].n, act, loss, m, tcfg);
    rho_out[ti] = recovery_score(trace.final_params, target);
  };

  if (pool != nullptr && pool->workers() > 1) {
    pool->run_blocks(tasks.size(), [&](std::size_t ti) { run_task(ti); });
  } else {
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) run_task(ti);
  }

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const int c = tasks[ti].cell;
    const int slot = static_cast<int>(ti) % trials;
    cells[c].final_rhos[slot] = rho_out[ti];
  }
  for (auto& c : cells) {
    double mean = 0.0;
    for (double r : c.final_rhos) mean += (r >= success_threshold) ? 1.0 : 0.0;
    mean /= trials;
    double var = 0.0;
    for (double r : c.final_rhos) {
      const double s = (r >= success_threshold) ? 1.0 : 0.0;
      var += (s - mean) * (s - mean);
    }
    c.success_mean = mean;
    c.success_std = trials > 1 ? std::sqrt(var / (trials - 1)) : 0.0;
    c.rho_median = percentile(c.final_rhos, 0.5);
    c.rho_p30 = percentile(c.final_rhos, 0.3);
    c.rho_p70 = percentile(c.final_rhos, 0.7);
  }
  return cells;
}

}  // namespace gds
