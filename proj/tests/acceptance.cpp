// Acceptance gate: every release-blocking numerical contract in one binary.
// Each criterion prints a single [PASS]/[FAIL] line with its measured values
// and wall time; the exit code is 0 only if every selected criterion passes.
// Run with --only N to execute a single criterion.

#include <cmath>
#include <complex>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gds/data.hpp"
#include "gds/dmft.hpp"
#include "gds/hessian.hpp"
#include "gds/io.hpp"
#include "gds/model.hpp"
#include "gds/rmt.hpp"
#include "gds/rng.hpp"
#include "gds/train.hpp"

using namespace gds;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string strf(const char* fmt, ...) {
  char buf[768];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

std::shared_ptr<Eigen::MatrixXd> gaussian_matrix(int n, int d,
                                                 std::uint64_t seed,
                                                 std::uint64_t salt) {
  auto xs = std::make_shared<Eigen::MatrixXd>(n, d);
  RngStream rng(seed, make_stream(StreamDomain::kMisc, salt));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) (*xs)(i, j) = rng.normal();
  return xs;
}

// 1. Unit weights at aspect ratio 4: bulk edge and whole-spectrum shape.
Outcome run_bulk_oracle() {
  const int d = 1000;
  const double delta = 4.0;
  const int n = static_cast<int>(delta) * d;
  const auto xs = gaussian_matrix(n, d, 2024, 11);
  const HessianBlock block(xs, Eigen::VectorXd::Ones(n));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block.dense(),
                                                    Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()[0];
  std::vector<double> vals(es.eigenvalues().data(),
                           es.eigenvalues().data() + d);
  const double ks =
      ks_distance(vals, [&](double v) { return mp_cdf(v, delta); });
  Outcome o;
  o.pass = std::abs(lmin - 0.25) <= 0.03 && ks <= 0.03;
  o.detail = strf("lambda_min=%.4f (want 0.25+-0.03) ks=%.4f (<=0.03)", lmin, ks);
  return o;
}

// 2. Self-consistent resolvent: residuals at 100 points plus the quadratic
// closed form for the constant law.
Outcome run_stieltjes_contract() {
  const Eigen::VectorXd atoms = Eigen::VectorXd::Ones(16);
  const double delta = 4.0;
  double max_res = 0.0;
  int points = 0;
  for (int ix = 0; ix < 10; ++ix)
    for (int iy = 0; iy < 6; ++iy) {
      const double x = -3.0 + 6.0 * ix / 9.0;
      const double y = 0.05 + 1.95 * iy / 5.0;
      const StieltjesSolution s =
          stieltjes(atoms, delta, std::complex<double>(x, y));
      max_res = std::max(max_res, s.residual);
      ++points;
    }
  for (int i = 0; i < 40; ++i) {
    const double z = -8.0 + (8.2) * i / 39.0;  // stays below the edge 0.25
    const StieltjesSolution s =
        stieltjes(atoms, delta, std::complex<double>(z, 0.0));
    max_res = std::max(max_res, s.residual);
    ++points;
  }
  const double anchor =
      stieltjes(atoms, delta, std::complex<double>(-1.0, 0.0)).alpha.real();
  const double expect = (-7.0 + std::sqrt(65.0)) / 2.0;
  const double aerr = std::abs(anchor - expect);
  Outcome o;
  o.pass = points == 100 && max_res <= 1e-10 && aerr <= 1e-9;
  o.detail = strf("max_residual=%.2e (<=1e-10) over %d points, anchor_err=%.2e (<=1e-9)",
                  max_res, points, aerr);
  return o;
}

// 3. Dense risk Hessian against central differences of the exact gradient.
Outcome run_hessian_assembly() {
  const Activation act = Activation::gelu();
  const Loss loss = Loss::huber(1.0);
  const int d = 20, n = 60;
  const double step = 1e-5;
  double worst = 0.0;
  for (int m : {1, 3}) {
    // scan for a configuration with every residual clear of the loss kink,
    // so the finite-difference columns are valid
    TargetSpec target;
    Dataset data;
    NetworkParams params;
    bool found = false;
    for (std::uint64_t seed = 40; seed < 90 && !found; ++seed) {
      target = sample_target(d, Link::phase_retrieval(), seed);
      data = sample_dataset(n, target, seed + 1);
      params = init_params(d, m, seed + 2);
      gd_step(params, act, loss, data.x, data.y, 1.5);
      double margin = 1e9;
      for (int i = 0; i < n; ++i) {
        const double f = forward(params, act, data.x.row(i));
        margin = std::min(margin,
                          std::abs(std::abs(f - data.y[i]) - loss.huber_m()));
      }
      found = margin > 5e-3;
    }
    if (!found) {
      Outcome o;
      o.detail = strf("m=%d: no kink-free configuration found", m);
      return o;
    }
    const Eigen::MatrixXd h = full_hessian(params, act, loss, data.x, data.y);
    Eigen::MatrixXd fd(m * d, m * d);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < d; ++i) {
        NetworkParams p = params;
        p.theta(i, j) += step;
        Eigen::MatrixXd gp = risk_and_grad(p, act, loss, data.x, data.y).grad;
        p.theta(i, j) -= 2 * step;
        Eigen::MatrixXd gm = risk_and_grad(p, act, loss, data.x, data.y).grad;
        Eigen::MatrixXd col = (gp - gm) / (2 * step);
        fd.col(j * d + i) = Eigen::Map<Eigen::VectorXd>(col.data(), m * d);
      }
    worst = std::max(worst, (h - fd).norm() / h.norm());
  }
  Outcome o;
  o.pass = worst < 1e-4;
  o.detail = strf("max relative error=%.2e (<1e-4) for m in {1,3}", worst);
  return o;
}

// 4. Block-diagonal curvature sandwiches the full risk Hessian at width 10.
Outcome run_curvature_sandwich() {
  const int d = 300, n = 1500, m = 10;
  const TargetSpec target = sample_target(d, Link::phase_retrieval(), 7);
  const Dataset data = sample_dataset(n, target, 8);
  NetworkParams params = init_params(d, m, 9);
  for (int t = 0; t < 3; ++t)
    gd_step(params, Activation::gelu(), Loss::huber(1.0), data.x, data.y, 1.5);
  const SandwichReport sr = sandwich_check(params, Activation::gelu(),
                                           Loss::huber(1.0), data.x, data.y);
  Outcome o;
  o.pass = sr.lower_ok && sr.upper_ok;
  o.detail = strf("lhs=%.4f mid=%.4f slack_C=%.3f bound=lhs+C/m=%.4f",
                  sr.lhs, sr.mid, sr.slack, sr.lhs + sr.slack / m);
  return o;
}

// 5. Mean-field kernels against a single wide training run: preactivation
// second moments and weight means over the first three steps.
Outcome run_kernel_vs_training() {
  const int d = 3000, T = 3;
  const double delta = 7.0, eta = 1.5;
  const int n = static_cast<int>(std::lround(delta * d));
  const Activation act = Activation::gelu();
  const Loss loss = Loss::huber(1.0);

  DmftConfig cfg;
  cfg.act = act;
  cfg.loss = loss;
  cfg.eta = eta;
  cfg.delta = delta;
  cfg.n_paths = 100000;
  cfg.seed = 6;
  DmftScalar engine(cfg);
  engine.run_to(T);

  const TargetSpec target = sample_target(d, Link::phase_retrieval(), 601);
  const Dataset data = sample_dataset(n, target, 602);
  NetworkParams params = init_params(d, 1, 603);

  double worst = 0.0;
  std::string at;
  Eigen::VectorXd vv(1);
  for (int t = 0; t <= T; ++t) {
    const Eigen::VectorXd v = data.x * params.theta.col(0);
    const double v2_sim = v.squaredNorm() / n;
    double g_sim = 0.0;
    for (int i = 0; i < n; ++i) {
      vv[0] = v[i];
      g_sim += weight_g(params, act, loss, 0, vv, data.y[i]);
    }
    g_sim /= n;
    const double v2_rel = std::abs(engine.second_moment_v(t) - v2_sim) /
                          std::max(std::abs(v2_sim), 0.02);
    const double g_rel = std::abs(engine.mean_g(t) - g_sim) /
                         std::max(std::abs(g_sim), 0.02);
    if (v2_rel > worst) {
      worst = v2_rel;
      at = strf("V2(%d) %.4f vs %.4f", t, engine.second_moment_v(t), v2_sim);
    }
    if (g_rel > worst) {
      worst = g_rel;
      at = strf("G(%d) %.4f vs %.4f", t, engine.mean_g(t), g_sim);
    }
    if (t < T) gd_step(params, act, loss, data.x, data.y, eta);
  }
  Outcome o;
  o.pass = worst <= 0.05;
  o.detail = strf("worst relative gap=%.3f (<=0.05) at %s", worst, at.c_str());
  return o;
}

// 6. Even link: the kernel overlap with the latent direction is exactly
// cancelled, and the run-averaged correlation in trained networks stays flat.
// Sampling ratio kept below the time-zero outlier threshold so no curvature
// direction preferentially amplifies the latent component at this scale.
Outcome run_hard_orthogonality() {
  const double bound = 5.0 / std::sqrt(100000.0);
  DmftConfig cfg;
  cfg.eta = 0.5;
  cfg.delta = 2.5;
  cfg.n_paths = 100000;
  cfg.seed = 6;
  DmftScalar engine(cfg);
  engine.run_to(10);
  const DmftKernels kr = engine.kernels();
  double max_kernel = 0.0;
  for (int t = 0; t <= 10; ++t)
    max_kernel = std::max(max_kernel, std::abs(kr.c_theta_star(t, 0)));
  for (int t = 0; t < 10; ++t)
    max_kernel = std::max(max_kernel, std::abs(kr.r_ell_star(t, 0)));

  const int d = 2000;
  const int n = static_cast<int>(std::lround(cfg.delta * d));
  double rho_sum[11] = {0};
  for (int run = 0; run < 20; ++run) {
    const std::uint64_t base = derive_seed(600, run + 1);
    const TargetSpec target =
        sample_target(d, Link::phase_retrieval(), derive_seed(base, 1));
    const Dataset data = sample_dataset(n, target, derive_seed(base, 2));
    NetworkParams params = init_params(d, 1, derive_seed(base, 3));
    rho_sum[0] += correlation_max(params, target.theta_star);
    for (int t = 1; t <= 10; ++t) {
      gd_step(params, Activation::gelu(), Loss::huber(1.0), data.x, data.y,
              cfg.eta);
      rho_sum[t] += correlation_max(params, target.theta_star);
    }
  }
  double max_rho = 0.0;
  for (double s : rho_sum) max_rho = std::max(max_rho, s / 20.0);
  Outcome o;
  o.pass = max_kernel <= bound && max_rho < 0.1;
  o.detail = strf("max kernel overlap=%.2e (<=%.2e), max mean rho over 20 runs=%.4f (<0.1)",
                  max_kernel, bound, max_rho);
  return o;
}

// 7. Simplified spiked model: outlier location and eigenvector alignment
// against the analytic prediction, averaged over 10 draws.
Outcome run_spiked_oracle() {
  const double delta = 8.0;
  const int d = 1500;
  const double curv0 = Activation::gelu().d2sigma(0.0);
  const Loss loss = Loss::huber(1.0);
  auto preproc = [&](double y, double) {
    return loss.eval(y, 0.0).dl * curv0;
  };
  double zgap = 0.0, agap = 0.0;
  for (int s = 1; s <= 10; ++s) {
    const SpikedModel sm =
        spiked_sample(preproc, Link::phase_retrieval(), delta, d, 700 + s);
    const EigenResult er = smallest_eigenpairs(sm.block, 1);
    const double lmin = er.values[0];
    const double align = alignment(er.vectors, sm.target.theta_star);
    GLaw law;
    law.g = sm.block.weights();
    law.v_hard = sm.block.samples() * sm.target.theta_star;
    OutlierReport rep = outlier_roots(law, delta);
    if (!rep.exists) {
      Outcome o;
      o.detail = strf("seed %d: no outlier predicted at delta=%.1f", s, delta);
      return o;
    }
    alignment_predict(rep, law, delta);
    zgap += std::abs(lmin - rep.roots[0].z_star);
    agap += std::abs(align - rep.roots[0].omega);
  }
  zgap /= 10.0;
  agap /= 10.0;
  Outcome o;
  o.pass = zgap <= 0.05 && agap <= 0.1;
  o.detail = strf("mean |lambda_min - z*|=%.4f (<=0.05), mean |align - omega|=%.4f (<=0.1)",
                  zgap, agap);
  return o;
}

// 8. Threshold points of the weight law at steps 0 and 10 for both shipped
// activations, three seeds each.
Outcome run_threshold_points() {
  struct Case {
    const char* name;
    Activation act;
    double eta;
    double want0, tol0, want10, tol10;
    double lo0, hi0, lo10, hi10;
  };
  const std::vector<Case> cases = {
      {"gelu", Activation::gelu(), 1.5, 4.35, 0.15, 5.85, 0.25, 3.0, 4.6, 8.5,
       10.2},
      {"quad", Activation::quad_gauss(), 0.25, 2.0, 0.15, 3.2, 0.25, 1.5, 2.5,
       3.6, 4.8},
  };
  Outcome o;
  o.pass = true;
  for (const Case& c : cases) {
    DmftConfig cfg;
    cfg.act = c.act;
    cfg.loss = Loss::huber(1.0);
    cfg.eta = c.eta;
    cfg.n_paths = 100000;
    const ThresholdPoint p0 =
        threshold_at_t(cfg, 0, 0.01, {1, 2, 3}, 0.01, c.lo0, c.hi0);
    const ThresholdPoint p10 =
        threshold_at_t(cfg, 10, 0.01, {1, 2, 3}, 0.01, c.lo10, c.hi10);
    const bool ok0 = !p0.infinite && std::abs(p0.delta_star - c.want0) <= c.tol0;
    const bool ok10 =
        !p10.infinite && std::abs(p10.delta_star - c.want10) <= c.tol10;
    o.pass = o.pass && ok0 && ok10;
    o.detail += strf("%s%s: d*(0)=%.3f (want %.2f+-%.2f) d*(10)=%.3f (want %.2f+-%.2f)",
                     o.detail.empty() ? "" : "; ", c.name, p0.delta_star,
                     c.want0, c.tol0, p10.delta_star, c.want10, c.tol10);
  }
  return o;
}

// 9. Long-horizon threshold curve and its 1/t extrapolation (extended).
Outcome run_threshold_extrapolation() {
  struct Case {
    const char* name;
    Activation act;
    double eta;
    double want, tol;
    double lo, hi;
  };
  const std::vector<Case> cases = {
      {"gelu", Activation::gelu(), 1.5, 6.05, 0.3, 3.8, 4.9},
      {"quad", Activation::quad_gauss(), 0.25, 3.6, 0.3, 1.5, 2.5},
  };
  Outcome o;
  o.pass = true;
  for (const Case& c : cases) {
    DmftConfig cfg;
    cfg.act = c.act;
    cfg.loss = Loss::huber(1.0);
    cfg.eta = c.eta;
    cfg.n_paths = 100000;
    std::vector<std::pair<int, double>> curve;
    double lo = c.lo, hi = c.hi;
    for (int t = 0; t <= 25; ++t) {
      const ThresholdPoint pt = threshold_at_t(cfg, t, 0.02, {1}, 0.01, lo, hi);
      if (pt.infinite) continue;
      curve.push_back({t, pt.delta_star});
      lo = std::max(0.5, pt.delta_star - 0.5);
      hi = pt.delta_star + 1.0;
    }
    const ExtrapolationFit fit = extrapolate_inf(curve);
    const bool ok = std::abs(fit.delta_inf - c.want) <= c.tol;
    o.pass = o.pass && ok;
    o.detail += strf("%s%s: d*(inf)=%.3f (want %.2f+-%.2f, %zu points, rms %.3f)",
                     o.detail.empty() ? "" : "; ", c.name, fit.delta_inf,
                     c.want, c.tol, curve.size(), fit.residual);
  }
  return o;
}

// 10. End-to-end recovery rates bracket the predicted transition.
Outcome run_recovery_transition() {
  TrainConfig tc;
  tc.eta = 1.5;
  tc.t_max = 1000;
  tc.test_n = 0;
  tc.log_every = 10;
  tc.seed = 1010;
  const std::vector<SweepCell> cells =
      success_sweep({1000}, {4.0, 8.0}, 20, Activation::gelu(),
                    Loss::huber(1.0), Link::phase_retrieval(), 1, tc);
  double s4 = -1.0, s8 = -1.0;
  for (const SweepCell& c : cells) {
    if (c.delta == 4.0) s4 = c.success_mean;
    if (c.delta == 8.0) s8 = c.success_mean;
  }
  Outcome o;
  o.pass = s4 >= 0.0 && s8 >= 0.0 && s4 <= 0.2 && s8 >= 0.8;
  o.detail = strf("success(delta=4)=%.2f (<=0.2), success(delta=8)=%.2f (>=0.8), 20 trials",
                  s4, s8);
  return o;
}

// 11. Delayed generalization at delta=15 and its absence at delta=5.
Outcome run_delayed_generalization() {
  const int d = 2000;
  TrainConfig tc;
  tc.eta = 0.5;
  tc.t_max = 1000;
  tc.test_n = 10000;
  tc.log_every = 1;
  tc.seed = 1111;
  const TargetSpec target = sample_target(d, Link::phase_retrieval(), 1112);
  const TrainTrace trace = train(target, 15 * d, Activation::gelu(),
                                 Loss::huber(1.0), 1, tc);
  int first_risk = -1, first_rho = -1;
  double min_train = trace.initial_risk;
  for (const TrainRecord& r : trace.records) {
    if (first_risk < 0 && r.train_risk < 0.5 * trace.initial_risk)
      first_risk = r.t;
    if (first_rho < 0 && r.rho > 0.5) first_rho = r.t;
    min_train = std::min(min_train, r.train_risk);
  }
  double peak_gap = -1.0;
  int peak_t = -1;
  double end_gap = 0.0;
  for (const TrainRecord& r : trace.records) {
    if (std::isnan(r.test_risk)) continue;
    const double gap = r.test_risk - r.train_risk;
    if (gap > peak_gap) {
      peak_gap = gap;
      peak_t = r.t;
    }
    end_gap = gap;
  }

  TrainConfig tc5 = tc;
  tc5.test_n = 0;
  tc5.seed = 1113;
  const TargetSpec target5 = sample_target(d, Link::phase_retrieval(), 1114);
  const TrainTrace low = train(target5, 5 * d, Activation::gelu(),
                               Loss::huber(1.0), 1, tc5);

  const bool ordered = first_risk >= 0 && first_rho >= 0 && first_risk < first_rho;
  const bool gap_shape = peak_t >= 0 && peak_t < first_rho &&
                         end_gap < 0.1 * peak_gap;
  Outcome o;
  o.pass = ordered && gap_shape && low.final_rho < 0.3;
  o.detail = strf("risk-halved t=%d < rho>0.5 t=%d (min/init=%.2f); gap peak %.3f at t=%d, end %.4f; rho(T)|delta=5 =%.3f (<0.3)",
                  first_risk, first_rho, min_train / trace.initial_risk,
                  peak_gap, peak_t, end_gap, low.final_rho);
  return o;
}

// 12. Pathwise kernel derivatives and closed-form derivative tables against
// finite differences.
Outcome run_derivative_checks() {
  double worst_act = 0.0;
  const double h1 = 1e-6;
  for (const Activation& act :
       {Activation::gelu(), Activation::quad_gauss()}) {
    for (double z = -6.0; z <= 6.0; z += 0.25) {
      const ActEval e = act.eval(z);
      const double fd1 = (act.sigma(z + h1) - act.sigma(z - h1)) / (2 * h1);
      const double fd2 = (act.dsigma(z + h1) - act.dsigma(z - h1)) / (2 * h1);
      worst_act = std::max(
          worst_act, std::abs(fd1 - e.dsigma) / std::max(1.0, std::abs(e.dsigma)));
      worst_act = std::max(
          worst_act,
          std::abs(fd2 - e.d2sigma) / std::max(1.0, std::abs(e.d2sigma)));
    }
  }
  double worst_loss = 0.0;
  for (const Loss& loss : {Loss::huber(1.0), Loss::square()}) {
    for (double y = -2.0; y <= 2.0; y += 0.5)
      for (double z = -2.2; z <= 2.2; z += 0.4) {
        if (loss.kind() == Loss::Kind::Huber &&
            std::abs(std::abs(z - y) - loss.huber_m()) < 0.05)
          continue;
        const LossEval e = loss.eval(y, z);
        const double fd_dl =
            (loss.eval(y, z + h1).l - loss.eval(y, z - h1).l) / (2 * h1);
        const double fd_d2l =
            (loss.eval(y, z + h1).dl - loss.eval(y, z - h1).dl) / (2 * h1);
        const double fd_dy =
            (loss.eval(y + h1, z).dl - loss.eval(y - h1, z).dl) / (2 * h1);
        worst_loss = std::max(
            worst_loss, std::abs(fd_dl - e.dl) / std::max(1.0, std::abs(e.dl)));
        worst_loss = std::max(
            worst_loss,
            std::abs(fd_d2l - e.d2l) / std::max(1.0, std::abs(e.d2l)));
        worst_loss = std::max(
            worst_loss,
            std::abs(fd_dy - e.dy_dl) / std::max(1.0, std::abs(e.dy_dl)));
      }
  }

  DmftConfig cfg;
  cfg.loss = Loss::huber(25.0);  // keep probes inside the smooth branch
  cfg.eta = 1.5;
  cfg.delta = 6.0;
  cfg.n_paths = 5000;
  cfg.seed = 12;
  DmftScalar engine(cfg);
  const int T = 4;
  engine.run_to(T);
  RngStream rng(78, make_stream(StreamDomain::kMisc, 1212));
  const double lam = 1e-5;
  double worst_jac = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::VectorXd w(T + 1);
    for (int s = 0; s <= T; ++s) w[s] = 1.5 * std::tanh(rng.normal());
    const double wstar = 1.5 * std::tanh(rng.normal());
    const double eps = rng.normal();
    const DmftScalar::PathProbe probe = engine.probe_path(w, wstar, eps, T);
    for (int s = 0; s <= T; ++s) {
      Eigen::VectorXd wp = w, wm = w;
      wp[s] += lam;
      wm[s] -= lam;
      const double fd = (engine.probe_path(wp, wstar, eps, T).v[T] -
                         engine.probe_path(wm, wstar, eps, T).v[T]) /
                        (2 * lam);
      worst_jac = std::max(worst_jac, std::abs(fd - probe.jw[s]) /
                                          std::max(1.0, std::abs(probe.jw[s])));
    }
    const DmftScalar::PathProbe sp = engine.probe_path(w, wstar + lam, eps, T);
    const DmftScalar::PathProbe sm = engine.probe_path(w, wstar - lam, eps, T);
    for (int s = 0; s <= T; ++s) {
      const double fd = (sp.v[s] - sm.v[s]) / (2 * lam);
      worst_jac = std::max(worst_jac, std::abs(fd - probe.js[s]) /
                                          std::max(1.0, std::abs(probe.js[s])));
    }
  }
  Outcome o;
  o.pass = worst_act <= 1e-5 && worst_loss <= 1e-5 && worst_jac <= 1e-4;
  o.detail = strf("activation fd=%.1e (<=1e-5), loss fd=%.1e (<=1e-5), pathwise fd=%.1e (<=1e-4)",
                  worst_act, worst_loss, worst_jac);
  return o;
}

struct Entry {
  int id;
  const char* name;
  Outcome (*run)();
};

const Entry kEntries[] = {
    {1, "bulk-spectrum-oracle", run_bulk_oracle},
    {2, "stieltjes-contract", run_stieltjes_contract},
    {3, "hessian-assembly", run_hessian_assembly},
    {4, "curvature-sandwich", run_curvature_sandwich},
    {5, "kernels-vs-training", run_kernel_vs_training},
    {6, "hard-direction-orthogonality", run_hard_orthogonality},
    {7, "spiked-model-oracle", run_spiked_oracle},
    {8, "threshold-points", run_threshold_points},
    {9, "threshold-extrapolation", run_threshold_extrapolation},
    {10, "recovery-transition", run_recovery_transition},
    {11, "delayed-generalization", run_delayed_generalization},
    {12, "derivative-checks", run_derivative_checks},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else if (std::strcmp(argv[i], "--help") == 0) {
      std::printf("usage: acceptance [--only N]\n");
      return 0;
    } else {
      std::fprintf(stderr, "unknown argument: %s\n", argv[i]);
      return 2;
    }
  }
  bool all_pass = true;
  bool ran_any = false;
  for (const Entry& e : kEntries) {
    if (only != 0 && e.id != only) continue;
    ran_any = true;
    WallTimer timer;
    Outcome o;
    try {
      o = e.run();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] %2d %-30s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", e.id,
                e.name, o.detail.c_str(), timer.seconds());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  if (!ran_any) {
    std::fprintf(stderr, "no criterion matches --only %d\n", only);
    return 2;
  }
  return all_pass ? 0 : 1;
}
