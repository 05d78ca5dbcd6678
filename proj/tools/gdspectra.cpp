// Command-line laboratory for the feature-learning phase transition:
// mean-field threshold prediction, empirical success sweeps, grokking
// traces, Hessian spectra with spectral overlays, and a self-check suite.

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gds/data.hpp"
#include "gds/dmft.hpp"
#include "gds/errors.hpp"
#include "gds/hessian.hpp"
#include "gds/io.hpp"
#include "gds/model.hpp"
#include "gds/rmt.hpp"
#include "gds/rng.hpp"
#include "gds/thread_pool.hpp"
#include "gds/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gds;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  int workers = 1;
  bool paper_scale = false;
  std::string out_dir = ".";
};

Activation make_activation(const std::string& name) {
  if (name == "gelu") return Activation::gelu();
  if (name == "quad") return Activation::quad_gauss();
  if (name == "relu") return Activation::relu();
  throw ConfigError("unknown activation '" + name + "' (gelu, quad, relu)");
}

double default_eta(const std::string& act_name) {
  if (act_name == "quad") return 0.25;
  return 1.5;
}

Loss make_loss(const std::string& name, double huber_m) {
  if (name == "huber") return Loss::huber(huber_m);
  if (name == "square") return Loss::square();
  throw ConfigError("unknown loss '" + name + "' (huber, square)");
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / name).string();
}

void finish_manifest(const GlobalOpts& g, const std::string& command,
                     const std::map<std::string, std::string>& resolved,
                     const WallTimer& timer,
                     const std::vector<std::string>& files) {
  RunManifest m;
  m.command = command;
  m.seed = g.seed;
  m.workers = g.workers;
  m.paper_scale = g.paper_scale;
  m.config = resolved;
  m.wall_seconds = timer.seconds();
  for (const std::string& f : files)
    m.outputs.push_back({fs::path(f).filename().string(), file_digest(f)});
  write_manifest(out_path(g, "manifest.json"), m);
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------- //

void run_predict_threshold(const KvConfig& cfg, const GlobalOpts& g) {
  cfg.require_known({"activation", "loss", "huber_m", "eta", "a0", "b0",
                     "t_min", "t_max", "n_paths", "n_seeds", "gap", "tol"});
  WallTimer timer;
  const std::string act_name = cfg.get_str("activation", "gelu");
  const std::string loss_name = cfg.get_str("loss", "huber");
  const double huber_m = cfg.get_double("huber_m", 1.0);
  const double eta = cfg.get_double("eta", default_eta(act_name));
  const int t_min = cfg.get_int("t_min", 0);
  const int t_max = cfg.get_int("t_max", 25);
  const int n_paths =
      cfg.get_int("n_paths", g.paper_scale ? 900000 : 100000);
  const int n_seeds = cfg.get_int("n_seeds", 3);
  const double gap = cfg.get_double("gap", 0.01);
  const double tol = cfg.get_double("tol", 0.01);
  if (t_min < 0 || t_max < t_min) throw ConfigError("bad t range");
  if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");

  DmftConfig base;
  base.act = make_activation(act_name);
  base.loss = make_loss(loss_name, huber_m);
  base.link = Link::phase_retrieval();
  base.eta = eta;
  base.n_paths = n_paths;
  base.a0 = cfg.get_double("a0", 1.0);
  base.b0 = cfg.get_double("b0", 0.0);

  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) seeds.push_back(g.seed + 1 + i);

  const std::string csv_path = out_path(g, "threshold_curve.csv");
  CsvWriter csv(csv_path,
                {"t", "delta_star", "delta_star_std", "n_seeds", "infinite"});
  std::vector<std::pair<int, double>> curve;
  json jcurve = json::array();
  double blo = 1.0, bhi = 8.0;
  for (int t = t_min; t <= t_max; ++t) {
    const ThresholdPoint pt =
        threshold_at_t(base, t, tol, seeds, gap, blo, bhi);
    csv.row({std::to_string(t), fmt(pt.delta_star), fmt(pt.delta_star_std),
             std::to_string(pt.per_seed.size()),
             pt.infinite ? "1" : "0"});
    std::fprintf(stderr, "t=%d delta*=%s\n", t, fmt(pt.delta_star).c_str());
    json jp = {{"t", t},
               {"delta_star", pt.delta_star},
               {"delta_star_std", pt.delta_star_std},
               {"infinite", pt.infinite},
               {"per_seed", pt.per_seed}};
    jcurve.push_back(std::move(jp));
    if (!pt.infinite) {
      curve.emplace_back(t, pt.delta_star);
      blo = std::max(1e-3, pt.delta_star - 0.5);
      bhi = pt.delta_star + 1.0;
    }
  }
  csv.close();

  json summary;
  summary["curve"] = std::move(jcurve);
  int usable = 0;
  for (const auto& [t, v] : curve)
    if (t >= 1) ++usable;
  if (usable >= 6) {
    const ExtrapolationFit fit = extrapolate_inf(curve);
    summary["extrapolation"] = {
        {"delta_inf", fit.delta_inf},
        {"coeffs", std::vector<double>(fit.coeffs.data(),
                                       fit.coeffs.data() + fit.coeffs.size())},
        {"residual", fit.residual}};
  } else {
    summary["extrapolation"] = nullptr;
    std::fprintf(stderr,
                 "warning: fewer than 6 finite points with t >= 1; "
                 "skipping the infinite-time fit\n");
  }
  // Stationarity proxy: the gap between the last two retained times of one
  // run near the last finite threshold, reported alongside the fit.
  if (!curve.empty() && curve.back().first >= 1) {
    DmftConfig probe = base;
    probe.delta = curve.back().second + 1.0;
    probe.seed = seeds[0];
    DmftScalar eng(probe);
    eng.run_to(curve.back().first);
    summary["stationarity_proxy"] = {
        {"t", curve.back().first},
        {"delta_star", curve.back().second},
        {"gap", eng.stationarity_gap(curve.back().first - 1,
                                     curve.back().first)}};
  }
  const std::string sum_path = out_path(g, "summary.json");
  {
    std::ofstream out(sum_path);
    out << summary.dump(2) << '\n';
  }

  std::map<std::string, std::string> rc = {
      {"activation", act_name},        {"loss", loss_name},
      {"huber_m", fmt(huber_m)},       {"eta", fmt(eta)},
      {"t_min", std::to_string(t_min)}, {"t_max", std::to_string(t_max)},
      {"n_paths", std::to_string(n_paths)},
      {"n_seeds", std::to_string(n_seeds)},
      {"gap", fmt(gap)},               {"tol", fmt(tol)},
      {"a0", fmt(base.a0)},            {"b0", fmt(base.b0)}};
  finish_manifest(g, "predict-threshold", rc, timer, {csv_path, sum_path});
}

// ---------------------------------------------------------------------- //

void run_sweep(const KvConfig& cfg, const GlobalOpts& g) {
  cfg.require_known({"activation", "loss", "huber_m", "eta", "m", "d_grid",
                     "delta_grid", "trials", "t_max", "test_n",
                     "success_threshold"});
  WallTimer timer;
  const std::string act_name = cfg.get_str("activation", "gelu");
  const std::string loss_name = cfg.get_str("loss", "huber");
  const double huber_m = cfg.get_double("huber_m", 1.0);
  const Activation act = make_activation(act_name);
  const Loss loss = make_loss(loss_name, huber_m);
  const int m = cfg.get_int("m", 1);
  const std::vector<double> d_grid_d = cfg.get_list(
      "d_grid", g.paper_scale ? std::vector<double>{1000, 2000, 4000}
                              : std::vector<double>{500, 1000});
  const std::vector<double> delta_grid =
      cfg.get_list("delta_grid", {3, 4, 5, 6, 7, 8, 9});
  const int trials = cfg.get_int("trials", g.paper_scale ? 60 : 20);
  const double threshold = cfg.get_double("success_threshold", 0.5);
  if (delta_grid.empty() || d_grid_d.empty())
    throw ConfigError("sweep: empty grid");

  std::vector<int> d_grid;
  for (double d : d_grid_d) {
    if (d < 2 || d != std::floor(d)) throw ConfigError("sweep: bad d value");
    d_grid.push_back(static_cast<int>(d));
  }

  TrainConfig tc;
  tc.eta = cfg.get_double("eta", default_eta(act_name));
  tc.t_max = cfg.get_int("t_max", 1000);
  tc.test_n = cfg.get_int("test_n", 0);
  tc.seed = g.seed;

  ThreadPool pool(static_cast<unsigned>(g.workers));
  const std::vector<SweepCell> cells =
      success_sweep(d_grid, delta_grid, trials, act, loss,
                    Link::phase_retrieval(), m, tc, threshold, &pool);

  const std::string csv_path = out_path(g, "sweep.csv");
  CsvWriter csv(csv_path, {"d", "delta", "n", "trials", "success_mean",
                           "success_std", "rho_p30", "rho_median", "rho_p70"});
  for (const SweepCell& c : cells)
    csv.row_values({static_cast<double>(c.d), c.delta,
                    static_cast<double>(c.n), static_cast<double>(c.trials),
                    c.success_mean, c.success_std, c.rho_p30, c.rho_median,
                    c.rho_p70});
  csv.close();

  std::map<std::string, std::string> rc = {
      {"activation", act_name},
      {"loss", loss_name},
      {"huber_m", fmt(huber_m)},
      {"eta", fmt(tc.eta)},
      {"m", std::to_string(m)},
      {"trials", std::to_string(trials)},
      {"t_max", std::to_string(tc.t_max)},
      {"test_n", std::to_string(tc.test_n)},
      {"success_threshold", fmt(threshold)}};
  {
    std::string s;
    for (std::size_t i = 0; i < d_grid.size(); ++i)
      s += (i ? "," : "") + std::to_string(d_grid[i]);
    rc["d_grid"] = s;
    s.clear();
    for (std::size_t i = 0; i < delta_grid.size(); ++i)
      s += (i ? "," : "") + fmt(delta_grid[i]);
    rc["delta_grid"] = s;
  }
  finish_manifest(g, "sweep", rc, timer, {csv_path});
}

// ---------------------------------------------------------------------- //

void run_grokking(const KvConfig& cfg, const GlobalOpts& g) {
  cfg.require_known({"activation", "loss", "huber_m", "eta", "m", "d",
                     "delta", "t_max", "test_n", "rho_stop", "post_steps"});
  WallTimer timer;
  const std::string act_name = cfg.get_str("activation", "gelu");
  const std::string loss_name = cfg.get_str("loss", "huber");
  const double huber_m = cfg.get_double("huber_m", 1.0);
  const Activation act = make_activation(act_name);
  const Loss loss = make_loss(loss_name, huber_m);
  const int d = cfg.get_int("d", g.paper_scale ? 4000 : 2000);
  const double delta = cfg.get_double("delta", 15.0);
  const int m = cfg.get_int("m", 1);

  TrainConfig tc;
  tc.eta = cfg.get_double("eta", 0.5);
  tc.t_max = cfg.get_int("t_max", 1000);
  tc.test_n = cfg.get_int("test_n", 10000);
  tc.rho_stop = cfg.get_double("rho_stop", 0.9);
  tc.post_stop_steps = cfg.get_int("post_steps", 300);
  tc.seed = g.seed;
  tc.log_every = 1;

  const TargetSpec target =
      sample_target(d, Link::phase_retrieval(), derive_seed(g.seed, 4));
  const int n = static_cast<int>(std::lround(delta * d));
  const TrainTrace trace = train(target, n, act, loss, m, tc);

  const std::string csv_path = out_path(g, "trace.csv");
  CsvWriter csv(csv_path, {"t", "rho", "train_risk", "test_risk", "gap"});
  for (const TrainRecord& r : trace.records)
    csv.row_values({static_cast<double>(r.t), r.rho, r.train_risk,
                    r.test_risk, r.test_risk - r.train_risk});
  csv.close();

  json summary = {{"stop_reason", stop_reason_name(trace.stop_reason)},
                  {"steps", trace.steps_taken},
                  {"final_rho", trace.final_rho},
                  {"d", d},
                  {"n", n},
                  {"delta", delta}};
  const std::string sum_path = out_path(g, "summary.json");
  {
    std::ofstream out(sum_path);
    out << summary.dump(2) << '\n';
  }

  std::map<std::string, std::string> rc = {
      {"activation", act_name},      {"loss", loss_name},
      {"huber_m", fmt(huber_m)},     {"eta", fmt(tc.eta)},
      {"m", std::to_string(m)},      {"d", std::to_string(d)},
      {"delta", fmt(delta)},         {"t_max", std::to_string(tc.t_max)},
      {"test_n", std::to_string(tc.test_n)},
      {"rho_stop", fmt(tc.rho_stop)},
      {"post_steps", std::to_string(tc.post_stop_steps)}};
  finish_manifest(g, "grokking", rc, timer, {csv_path, sum_path});
}

// ---------------------------------------------------------------------- //

void run_hessian_spectrum(const KvConfig& cfg, const GlobalOpts& g) {
  cfg.require_known({"activation", "loss", "huber_m", "eta", "m", "d",
                     "delta", "steps", "neuron", "bins", "eigenpairs"});
  WallTimer timer;
  const std::string act_name = cfg.get_str("activation", "gelu");
  const std::string loss_name = cfg.get_str("loss", "huber");
  const double huber_m = cfg.get_double("huber_m", 1.0);
  const Activation act = make_activation(act_name);
  const Loss loss = make_loss(loss_name, huber_m);
  check_spectral_activation(act);
  const int d = cfg.get_int("d", g.paper_scale ? 4000 : 1500);
  const double delta = cfg.get_double("delta", 10.0);
  const int steps = cfg.get_int("steps", 5);
  const int m = cfg.get_int("m", 1);
  const int neuron = cfg.get_int("neuron", 0);
  const int bins = cfg.get_int("bins", 80);
  const int n_pairs = cfg.get_int("eigenpairs", 5);
  const double eta = cfg.get_double("eta", default_eta(act_name));

  const TargetSpec target =
      sample_target(d, Link::phase_retrieval(), derive_seed(g.seed, 4));
  const int n = static_cast<int>(std::lround(delta * d));
  const Dataset data = sample_dataset(n, target, derive_seed(g.seed, 1));
  NetworkParams params = init_params(d, m, derive_seed(g.seed, 3));
  for (int t = 0; t < steps; ++t)
    gd_step(params, act, loss, data.x, data.y, eta);

  const HessianBlock block =
      hessian_block(params, act, loss,
                    std::make_shared<Eigen::MatrixXd>(data.x), data.y, neuron);
  const Eigen::MatrixXd dense = block.dense(std::max(2500, d));
  const Histogram hist = esd(dense, bins);
  const EigenResult pairs = smallest_eigenpairs(dense, n_pairs);

  const std::string esd_path = out_path(g, "esd.csv");
  {
    CsvWriter csv(esd_path, {"bin_lo", "bin_hi", "density"});
    for (int b = 0; b < static_cast<int>(hist.density.size()); ++b)
      csv.row_values({hist.edges[b], hist.edges[b + 1], hist.density[b]});
  }

  const std::string eig_path = out_path(g, "eigenpairs.csv");
  {
    CsvWriter csv(eig_path, {"value", "residual", "hard_alignment"});
    for (int i = 0; i < pairs.values.size(); ++i)
      csv.row_values({pairs.values[i], pairs.residuals[i],
                      alignment(pairs.vectors.col(i), target.theta_star)});
  }

  // Spectral overlay predicted from the empirical weight/signal law.
  GLaw law;
  law.t = steps;
  law.j = neuron;
  law.g = hessian_weights(params, act, loss, data.x, data.y, neuron);
  law.v_hard = data.x * target.theta_star;
  const LeftEdge edge = left_edge(law, delta);
  OutlierReport report = outlier_roots(law, delta);
  if (report.exists) alignment_predict(report, law, delta);

  json pred;
  pred["d"] = d;
  pred["n"] = n;
  pred["delta"] = delta;
  pred["steps"] = steps;
  pred["edge_c"] = edge.c;
  pred["exists"] = report.exists;
  pred["z_boundary"] = report.z_boundary;
  json roots = json::array();
  for (const OutlierRoot& r : report.roots)
    roots.push_back({{"z_star", r.z_star},
                     {"multiplicity", r.multiplicity},
                     {"omega", r.omega}});
  pred["roots"] = std::move(roots);
  pred["lambda_min_sample"] = pairs.values[0];
  pred["alignment_sample"] = alignment(pairs.vectors.col(0), target.theta_star);
  const std::string pred_path = out_path(g, "prediction.json");
  {
    std::ofstream out(pred_path);
    out << pred.dump(2) << '\n';
  }

  std::map<std::string, std::string> rc = {
      {"activation", act_name},   {"loss", loss_name},
      {"huber_m", fmt(huber_m)},  {"eta", fmt(eta)},
      {"m", std::to_string(m)},   {"d", std::to_string(d)},
      {"delta", fmt(delta)},      {"steps", std::to_string(steps)},
      {"neuron", std::to_string(neuron)},
      {"bins", std::to_string(bins)},
      {"eigenpairs", std::to_string(n_pairs)}};
  finish_manifest(g, "hessian-spectrum", rc, timer,
                  {esd_path, eig_path, pred_path});
}

// ---------------------------------------------------------------------- //

void run_dmft(const KvConfig& cfg, const GlobalOpts& g) {
  cfg.require_known({"activation", "loss", "huber_m", "eta", "delta", "T",
                     "n_paths", "a0", "b0"});
  WallTimer timer;
  const std::string act_name = cfg.get_str("activation", "gelu");
  const std::string loss_name = cfg.get_str("loss", "huber");
  const double huber_m = cfg.get_double("huber_m", 1.0);

  DmftConfig dc;
  dc.act = make_activation(act_name);
  dc.loss = make_loss(loss_name, huber_m);
  dc.link = Link::phase_retrieval();
  dc.eta = cfg.get_double("eta", default_eta(act_name));
  dc.delta = cfg.get_double("delta", 6.0);
  dc.n_paths = cfg.get_int("n_paths", g.paper_scale ? 900000 : 100000);
  dc.seed = g.seed;
  dc.a0 = cfg.get_double("a0", 1.0);
  dc.b0 = cfg.get_double("b0", 0.0);
  const int horizon = cfg.get_int("T", 10);

  ThreadPool pool(static_cast<unsigned>(g.workers));
  DmftScalar engine(dc);
  engine.run_to(horizon, &pool);

  const std::string ker_path = out_path(g, "kernels.json");
  save_kernels(ker_path, engine.kernels(), dc.seed, dc.n_paths);

  const std::string mom_path = out_path(g, "moments.csv");
  {
    CsvWriter csv(mom_path,
                  {"t", "second_moment_v", "mean_g", "gap_from_prev"});
    for (int t = 0; t <= horizon; ++t)
      csv.row_values({static_cast<double>(t), engine.second_moment_v(t),
                      engine.mean_g(t),
                      t > 0 ? engine.stationarity_gap(t - 1, t)
                            : std::numeric_limits<double>::quiet_NaN()});
  }

  std::map<std::string, std::string> rc = {
      {"activation", act_name},  {"loss", loss_name},
      {"huber_m", fmt(huber_m)}, {"eta", fmt(dc.eta)},
      {"delta", fmt(dc.delta)},  {"T", std::to_string(horizon)},
      {"n_paths", std::to_string(dc.n_paths)},
      {"a0", fmt(dc.a0)},        {"b0", fmt(dc.b0)}};
  finish_manifest(g, "dmft-run", rc, timer, {ker_path, mom_path});
}

// ---------------------------------------------------------------------- //

struct CheckResult {
  std::string name;
  bool pass = false;
  std::map<std::string, double> measured;
};

void report_check(std::vector<CheckResult>& all, CheckResult r) {
  std::printf("[%s] %s", r.pass ? "PASS" : "FAIL", r.name.c_str());
  for (const auto& [k, v] : r.measured) std::printf("  %s=%.6g", k.c_str(), v);
  std::printf("\n");
  std::fflush(stdout);
  all.push_back(std::move(r));
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

void run_validate(const KvConfig& cfg, const GlobalOpts& g) {
  cfg.require_known({"n_mc", "fault_injection"});
  WallTimer timer;
  const int n_mc = cfg.get_int("n_mc", 10000);
  const std::string fault = cfg.get_str("fault_injection", "");
  if (!fault.empty() && fault != "weight_sign")
    throw ConfigError("unknown fault_injection '" + fault + "'");
  if (n_mc < 1000) throw ConfigError("n_mc must be >= 1e3");

  std::vector<CheckResult> checks;

  // 1. activation and loss derivatives against central differences
  {
    CheckResult r;
    r.name = "derivative_checks";
    double worst = 0.0;
    const double h = 1e-5;
    for (const Activation& act :
         {Activation::gelu(), Activation::quad_gauss()}) {
      for (double z = -3.0; z <= 3.0; z += 0.37) {
        const ActEval e = act.eval(z);
        const double fd1 = (act.sigma(z + h) - act.sigma(z - h)) / (2 * h);
        const double fd2 = (act.dsigma(z + h) - act.dsigma(z - h)) / (2 * h);
        worst = std::max(worst, rel_err(e.dsigma, fd1));
        worst = std::max(worst, rel_err(e.d2sigma, fd2));
      }
    }
    for (const Loss& loss : {Loss::huber(1.0), Loss::square()}) {
      for (double y = -2.0; y <= 2.0; y += 0.61) {
        for (double z = -2.0; z <= 2.0; z += 0.57) {
          const LossEval e = loss.eval(y, z);
          const double fdz =
              (loss.eval(y, z + h).l - loss.eval(y, z - h).l) / (2 * h);
          const double fdzz =
              (loss.eval(y, z + h).dl - loss.eval(y, z - h).dl) / (2 * h);
          const double fdy =
              (loss.eval(y + h, z).dl - loss.eval(y - h, z).dl) / (2 * h);
          worst = std::max(worst, rel_err(e.dl, fdz));
          if (std::abs(std::abs(z - y) - 1.0) > 0.05 &&
              std::abs(std::abs(z + y) - 1.0) > 0.05) {
            // skip the Huber kink neighborhoods for second derivatives
            worst = std::max(worst, rel_err(e.d2l, fdzz));
            worst = std::max(worst, rel_err(e.dy_dl, fdy));
          }
        }
      }
    }
    r.measured["max_rel_err"] = worst;
    r.pass = worst <= 2e-5;
    report_check(checks, r);
  }

  // 2. risk gradient against finite differences
  {
    CheckResult r;
    r.name = "risk_gradient";
    const int d = 8, n = 24, m = 3;
    const TargetSpec target =
        sample_target(d, Link::phase_retrieval(), derive_seed(g.seed, 11));
    const Dataset data = sample_dataset(n, target, derive_seed(g.seed, 12));
    NetworkParams params = init_params(d, m, derive_seed(g.seed, 13));
    const Activation act = Activation::gelu();
    const Loss loss = Loss::huber(1.0);
    const RiskGrad rg = risk_and_grad(params, act, loss, data.x, data.y);
    double worst = 0.0;
    const double h = 1e-6;
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < d; i += 3) {
        NetworkParams p = params;
        p.theta(i, j) += h;
        const double up = risk_only(p, act, loss, data.x, data.y);
        p.theta(i, j) -= 2 * h;
        const double dn = risk_only(p, act, loss, data.x, data.y);
        worst = std::max(worst, rel_err(rg.grad(i, j), (up - dn) / (2 * h)));
      }
    r.measured["max_rel_err"] = worst;
    r.pass = worst <= 1e-4;
    report_check(checks, r);
  }

  // 3. Stieltjes residuals and the constant-law anchor
  {
    CheckResult r;
    r.name = "stieltjes";
    RngStream rng(g.seed, make_stream(StreamDomain::kMisc, 0x51, 0));
    Eigen::VectorXd atoms(4000);
    for (int i = 0; i < atoms.size(); ++i)
      atoms[i] = rng.normal() - 0.3;
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const std::complex<double> z(-3.0 + 0.3 * i, 0.2 + 0.05 * i);
      worst = std::max(worst, stieltjes(atoms, 5.0, z).residual);
    }
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(100);
    const double anchor =
        stieltjes(ones, 4.0, std::complex<double>(-1.0, 0.0)).alpha.real();
    const double exact = (-7.0 + std::sqrt(65.0)) / 2.0;
    r.measured["max_residual"] = worst;
    r.measured["anchor_err"] = std::abs(anchor - exact);
    r.pass = worst <= 1e-10 && std::abs(anchor - exact) <= 1e-9;
    report_check(checks, r);
  }

  // 4. classical bulk edge against a sampled instance
  {
    CheckResult r;
    r.name = "mp_edge_sample";
    const int d = 800;
    const double delta = 4.0;
    auto ones_pre = [](double, double) { return 1.0; };
    const SpikedModel sm = spiked_sample(ones_pre, Link::phase_retrieval(),
                                         delta, d, derive_seed(g.seed, 21));
    const Eigen::MatrixXd dense = sm.block.dense(1200);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    const double lmin = es.eigenvalues()[0];
    r.measured["lambda_min"] = lmin;
    r.measured["edge_err"] = std::abs(lmin - mp_left_edge(delta));
    r.pass = r.measured["edge_err"] <= 0.05;
    report_check(checks, r);
  }

  // 5. block-diagonal vs full-curvature eigenvalue sandwich
  {
    CheckResult r;
    r.name = "sandwich";
    const int d = 120, n = 600, m = 5;
    const TargetSpec target =
        sample_target(d, Link::phase_retrieval(), derive_seed(g.seed, 31));
    const Dataset data = sample_dataset(n, target, derive_seed(g.seed, 32));
    NetworkParams params = init_params(d, m, derive_seed(g.seed, 33));
    for (int t = 0; t < 3; ++t)
      gd_step(params, Activation::gelu(), Loss::huber(1.0), data.x, data.y,
              1.0);
    const SandwichReport sr = sandwich_check(params, Activation::gelu(),
                                             Loss::huber(1.0), data.x, data.y);
    r.measured["lhs"] = sr.lhs;
    r.measured["mid"] = sr.mid;
    r.measured["slack"] = sr.slack;
    r.pass = sr.lower_ok && sr.upper_ok;
    report_check(checks, r);
  }

  // 6. mean-field trajectory against a finite simulation
  {
    CheckResult r;
    r.name = "dmft_vs_sim";
    const int d = 1000, horizon = 2;
    const double delta = 7.0;
    const double tol = 0.08 * std::sqrt(std::max(1.0, 1e4 / n_mc));
    DmftConfig dc;
    dc.act = Activation::gelu();
    dc.loss = Loss::huber(1.0);
    dc.link = Link::phase_retrieval();
    dc.eta = 1.5;
    dc.delta = delta;
    dc.n_paths = n_mc;
    dc.seed = g.seed + 5;
    DmftScalar engine(dc);
    engine.run_to(horizon);

    const TargetSpec target =
        sample_target(d, Link::phase_retrieval(), derive_seed(g.seed, 41));
    const int n = static_cast<int>(std::lround(delta * d));
    const Dataset data = sample_dataset(n, target, derive_seed(g.seed, 42));
    NetworkParams params = init_params(d, 1, derive_seed(g.seed, 43));
    double worst = 0.0;
    for (int t = 0; t <= horizon; ++t) {
      const Eigen::VectorXd v = data.x * params.theta.col(0);
      const double sim_v2 = v.squaredNorm() / n;
      const Eigen::VectorXd gw = hessian_weights(params, Activation::gelu(),
                                                 Loss::huber(1.0), data.x,
                                                 data.y, 0);
      const double sim_g = gw.mean();
      const double dm_v2 = engine.second_moment_v(t);
      const double dm_g = engine.mean_g(t);
      worst = std::max(worst, std::abs(sim_v2 - dm_v2) /
                                  std::max(0.1, std::abs(dm_v2)));
      worst = std::max(worst,
                       std::abs(sim_g - dm_g) / std::max(0.1, std::abs(dm_g)));
      if (t < horizon)
        gd_step(params, Activation::gelu(), Loss::huber(1.0), data.x, data.y,
                dc.eta);
    }
    r.measured["max_rel_err"] = worst;
    r.measured["tolerance"] = tol;
    r.pass = worst <= tol;
    report_check(checks, r);
  }

  // 7. spiked-model oracle: predicted outlier and alignment vs a sample
  {
    CheckResult r;
    r.name = "spiked_oracle";
    const int d = 600;
    const double delta = 8.0;
    const Activation act = Activation::gelu();
    const Loss loss = Loss::huber(1.0);
    const Link link = Link::phase_retrieval();
    auto gamma = [&](double y, double) {
      return loss.eval(y, 0.0).dl * act.d2sigma(0.0);
    };
    const double flip = fault == "weight_sign" ? -1.0 : 1.0;
    auto gamma_sample = [&](double y, double zeta) {
      return flip * gamma(y, zeta);
    };
    const SpikedModel sm =
        spiked_sample(gamma_sample, link, delta, d, derive_seed(g.seed, 51));
    const Eigen::MatrixXd dense = sm.block.dense(1200);
    const EigenResult pairs = smallest_eigenpairs(dense, 1);
    const double lmin = pairs.values[0];
    const double align =
        alignment(pairs.vectors.col(0), sm.target.theta_star);

    GLaw law;
    law.t = 0;
    law.j = 0;
    law.g.resize(n_mc);
    law.v_hard.resize(n_mc, 1);
    RngStream rng(g.seed, make_stream(StreamDomain::kMisc, 0x52, 0));
    for (int i = 0; i < n_mc; ++i) {
      const double w = rng.normal();
      const double eps = rng.normal();
      const double y = link.h(&w, eps);
      law.g[i] = gamma(y, 0.0);
      law.v_hard(i, 0) = w;
    }
    OutlierReport rep = outlier_roots(law, delta);
    bool ok = rep.exists;
    double zerr = 1e9, aerr = 1e9;
    if (rep.exists) {
      alignment_predict(rep, law, delta);
      zerr = std::abs(rep.roots[0].z_star - lmin);
      aerr = std::abs(rep.roots[0].omega - align);
      ok = zerr <= 0.1 && aerr <= 0.15;
    }
    r.measured["lambda_min"] = lmin;
    r.measured["z_err"] = zerr;
    r.measured["align_err"] = aerr;
    r.pass = ok;
    report_check(checks, r);
  }

  bool all_pass = true;
  json jchecks = json::array();
  for (const CheckResult& c : checks) {
    all_pass = all_pass && c.pass;
    jchecks.push_back(
        {{"name", c.name}, {"pass", c.pass}, {"measured", c.measured}});
  }
  json report = {{"all_pass", all_pass}, {"checks", std::move(jchecks)}};
  const std::string rep_path = out_path(g, "validate_report.json");
  {
    std::ofstream out(rep_path);
    out << report.dump(2) << '\n';
  }
  std::map<std::string, std::string> rc = {
      {"n_mc", std::to_string(n_mc)}, {"fault_injection", fault}};
  finish_manifest(g, "validate", rc, timer, {rep_path});
  if (!all_pass) throw NumericalError("validation suite reported failures");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Gradient-descent spectral laboratory: trains shallow networks on "
      "multi-index data, predicts the feature-learning sample-ratio "
      "threshold from mean-field kernels plus random-matrix outlier "
      "analysis, and cross-checks the two against each other."};
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  auto* seed_opt =
      app.add_option("--seed", g.seed, "base RNG seed (default 0)");
  app.add_option("--workers", g.workers, "thread count (default 1)");
  app.add_flag("--paper-scale", g.paper_scale,
               "full-scale experiment defaults (hours, not minutes)");
  app.add_option("--out", g.out_dir, "output directory (default .)");

  auto* c_thr = app.add_subcommand(
      "predict-threshold",
      "critical sample ratio per step plus the infinite-time fit\n"
      "config keys: activation loss.kind loss.M eta a0 b0 t_min t_max "
      "n_paths n_seeds gap tol seed");
  auto* c_sweep = app.add_subcommand(
      "sweep",
      "empirical recovery rate over a (d, delta) grid\n"
      "config keys: activation loss.kind loss.M eta m d_grid delta_grid "
      "trials t_max test_n success_threshold seed");
  auto* c_grok = app.add_subcommand(
      "grokking",
      "full training trace at one (d, delta) point\n"
      "config keys: activation loss.kind loss.M eta m d delta t_max test_n "
      "rho_stop post_steps seed");
  auto* c_hess = app.add_subcommand(
      "hessian-spectrum",
      "spectrum, eigenpairs and alignment of one curvature block after "
      "training, with the law-based overlay\n"
      "config keys: activation loss.kind loss.M eta m d delta steps neuron "
      "bins eigenpairs seed");
  auto* c_dmft = app.add_subcommand(
      "dmft-run",
      "mean-field kernel table and path moments\n"
      "config keys: activation loss.kind loss.M eta delta T n_paths a0 b0 "
      "seed");
  auto* c_val = app.add_subcommand(
      "validate",
      "cross-module invariant suite\n"
      "config keys: n_mc fault_injection seed");
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    KvConfig cfg = g.config_path.empty() ? KvConfig()
                                         : KvConfig::parse_file(g.config_path);
    // Dotted spellings are the documented names; the flat ones are aliases.
    const std::pair<const char*, const char*> aliases[] = {
        {"loss.kind", "loss"}, {"loss.M", "huber_m"}};
    for (const auto& [dotted, flat] : aliases) {
      if (cfg.has(dotted)) {
        if (cfg.has(flat))
          throw ConfigError(std::string("config: both '") + dotted +
                            "' and '" + flat + "' present");
        cfg.set(flat, cfg.get_str(dotted, ""));
        cfg.erase(dotted);
      }
    }
    // A seed in the file applies unless the flag overrides it.
    if (cfg.has("seed")) {
      if (seed_opt->count() == 0) g.seed = cfg.get_u64("seed", 0);
      cfg.erase("seed");
    }
    if (g.workers < 1) throw ConfigError("--workers must be >= 1");
    if (app.got_subcommand(c_thr)) run_predict_threshold(cfg, g);
    if (app.got_subcommand(c_sweep)) run_sweep(cfg, g);
    if (app.got_subcommand(c_grok)) run_grokking(cfg, g);
    if (app.got_subcommand(c_hess)) run_hessian_spectrum(cfg, g);
    if (app.got_subcommand(c_dmft)) run_dmft(cfg, g);
    if (app.got_subcommand(c_val)) run_validate(cfg, g);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 3;
  }
  return 0;
}
