#include "gds/rmt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gds/errors.hpp"

namespace gds {

namespace {

using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kEqTol = 1e-10;
constexpr int kIterCap = 10000;
constexpr double kEdgeSurrogate = 1e9;

cplx psi_c(const Eigen::VectorXd& g, double delta, cplx alpha) {
  cplx acc(0.0, 0.0);
  const int n = static_cast<int>(g.size());
  for (int i = 0; i < n; ++i) acc += g[i] / (delta + g[i] * alpha);
  return delta * acc / static_cast<double>(n);
}

double psi_r(const Eigen::VectorXd& g, double delta, double alpha) {
  double acc = 0.0;
  const int n = static_cast<int>(g.size());
  for (int i = 0; i < n; ++i) acc += g[i] / (delta + g[i] * alpha);
  return delta * acc / static_cast<double>(n);
}

// Open interval of alpha values keeping every denominator delta + g*alpha
// positive.
std::pair<double, double> admissible(const Eigen::VectorXd& g, double delta) {
  const double gmin = g.minCoeff();
  const double gmax = g.maxCoeff();
  const double hi = gmin < 0.0 ? delta / (-gmin)
                               : std::numeric_limits<double>::infinity();
  const double lo = gmax > 0.0 ? -delta / gmax
                               : -std::numeric_limits<double>::infinity();
  return {lo, hi};
}

StieltjesSolution solve_complex(const Eigen::VectorXd& g, double delta, cplx z,
                                cplx alpha0) {
  StieltjesSolution sol;
  sol.z = z;
  cplx alpha = alpha0;
  double res = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < kIterCap; ++it) {
    const cplx p = psi_c(g, delta, alpha);
    res = std::abs(z + 1.0 / alpha - p);
    if (res <= 1e-11) break;
    const cplx next = 0.5 * alpha + 0.5 / (p - z);
    if (!std::isfinite(next.real()) || !std::isfinite(next.imag())) break;
    if (std::abs(next - alpha) <= 1e-16 * std::abs(alpha)) {
      alpha = next;
      res = std::abs(z + 1.0 / alpha - psi_c(g, delta, alpha));
      break;
    }
    alpha = next;
  }
  sol.alpha = alpha;
  sol.residual = res;
  sol.iterations = it;
  return sol;
}

double edge_phi(const Eigen::VectorXd& g, double delta, double alpha) {
  return -1.0 / alpha + psi_r(g, delta, alpha);
}

// Derivative of the inverse map z(alpha); positive exactly on the branch
// where alpha(z) is the genuine Stieltjes transform.
double branch_slope(const Eigen::VectorXd& g, double delta, double alpha) {
  double acc = 0.0;
  const int n = static_cast<int>(g.size());
  for (int i = 0; i < n; ++i) {
    const double den = delta + g[i] * alpha;
    acc += g[i] * g[i] / (den * den);
  }
  return 1.0 / (alpha * alpha) - delta * acc / static_cast<double>(n);
}

StieltjesSolution solve_real(const Eigen::VectorXd& g, double delta, double z) {
  const auto [a_lo, a_hi] = admissible(g, delta);
  StieltjesSolution sol;
  sol.z = cplx(z, 0.0);

  // Damped fixed point first; it handles every query left of a nonpositive
  // edge (the only regime the spike machinery touches).
  double alpha = -1.0 / z;
  bool ok = alpha > a_lo && alpha < a_hi;
  int it = 0;
  double res = std::numeric_limits<double>::infinity();
  if (ok) {
    for (; it < kIterCap; ++it) {
      const double p = psi_r(g, delta, alpha);
      res = std::abs(z + 1.0 / alpha - p);
      if (res <= 1e-11) break;
      const double next = 0.5 * alpha + 0.5 / (p - z);
      if (!std::isfinite(next) || next <= a_lo || next >= a_hi) {
        ok = false;
        break;
      }
      if (std::abs(next - alpha) <= 1e-16 * std::abs(alpha)) {
        alpha = next;
        res = std::abs(z + 1.0 / alpha - psi_r(g, delta, alpha));
        break;
      }
      alpha = next;
    }
  }
  if (ok && res <= kEqTol && alpha > 0.0 &&
      branch_slope(g, delta, alpha) > 0.0) {
    sol.alpha = cplx(alpha, 0.0);
    sol.residual = res;
    sol.iterations = it;
    return sol;
  }

  // Bracketed bisection on the increasing branch (0, alpha_star].
  const LeftEdge le = left_edge(g, delta);
  if (z >= le.c) throw NumericalError("stieltjes: real z not below the edge");
  double hi = le.alpha_star;
  double lo = hi;
  int guard = 0;
  while (edge_phi(g, delta, lo) >= z) {
    lo *= 0.5;
    if (++guard > 4000)
      throw NumericalError("stieltjes: failed to bracket the real solution");
  }
  for (int k = 0; k < 200 && (hi - lo) > 1e-16 * std::max(1.0, hi); ++k) {
    const double mid = 0.5 * (lo + hi);
    (edge_phi(g, delta, mid) < z ? lo : hi) = mid;
  }
  alpha = 0.5 * (lo + hi);
  sol.alpha = cplx(alpha, 0.0);
  sol.residual = std::abs(z + 1.0 / alpha - psi_r(g, delta, alpha));
  sol.iterations = it;
  return sol;
}

double golden_max(const Eigen::VectorXd& g, double delta, double a, double b) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - invphi * (b - a);
  double x2 = a + invphi * (b - a);
  double f1 = edge_phi(g, delta, x1);
  double f2 = edge_phi(g, delta, x2);
  for (int k = 0; k < 120 && (b - a) > 1e-14 * std::max(1.0, std::abs(b));
       ++k) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = edge_phi(g, delta, x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = edge_phi(g, delta, x1);
    }
  }
  return f1 > f2 ? x1 : x2;
}

// E[delta G v^2 / (delta + G alpha)] (the r = 1 spike expectation).
double spike_scalar(const GLaw& law, double delta, double alpha) {
  double acc = 0.0;
  const int n = static_cast<int>(law.g.size());
  for (int i = 0; i < n; ++i) {
    const double v = law.v_hard(i, 0);
    acc += delta * law.g[i] * v * v / (delta + law.g[i] * alpha);
  }
  return acc / static_cast<double>(n);
}

Eigen::MatrixXd spike_matrix(const GLaw& law, double delta, double alpha) {
  const int n = static_cast<int>(law.g.size());
  const int r = static_cast<int>(law.v_hard.cols());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(r, r);
  for (int i = 0; i < n; ++i) {
    const double w = delta * law.g[i] / (delta + law.g[i] * alpha);
    m.noalias() += w * law.v_hard.row(i).transpose() * law.v_hard.row(i);
  }
  return m / static_cast<double>(n);
}

double alpha_real_at(const Eigen::VectorXd& g, double delta, double z) {
  return stieltjes(g, delta, cplx(z, 0.0)).alpha.real();
}

}  // namespace

StieltjesSolution stieltjes(const Eigen::VectorXd& g_atoms, double delta,
                            std::complex<double> z) {
  if (g_atoms.size() == 0) throw ConfigError("stieltjes: empty weight law");
  if (!(delta > 0.0)) throw ConfigError("stieltjes: delta must be positive");
  if (z.imag() > 0.0) {
    StieltjesSolution sol = solve_complex(g_atoms, delta, z, -1.0 / z);
    if (sol.residual > kEqTol)
      throw NumericalError("stieltjes: no convergence at Im z = " +
                           std::to_string(z.imag()));
    return sol;
  }
  if (z.imag() < 0.0)
    throw ConfigError("stieltjes: lower half plane not supported");
  return solve_real(g_atoms, delta, z.real());
}

double alpha_prime(const Eigen::VectorXd& g_atoms, double delta,
                   double alpha) {
  const double d = branch_slope(g_atoms, delta, alpha);
  if (!(d > 1e-12 / (alpha * alpha)))
    throw NumericalError(
        "alpha_prime: root too close to the edge; use a delta further from "
        "the threshold");
  return 1.0 / d;
}

LeftEdge left_edge(const Eigen::VectorXd& g_atoms, double delta) {
  if (g_atoms.size() == 0) throw ConfigError("left_edge: empty weight law");
  if (!(delta > 0.0)) throw ConfigError("left_edge: delta must be positive");
  const double gmin = g_atoms.minCoeff();
  const double a_cap =
      gmin < 0.0 ? delta / (-gmin) : kEdgeSurrogate;
  const double mean_abs = g_atoms.cwiseAbs().mean();
  const double a_scale = delta / (mean_abs + 1e-300);
  const double lo = std::min(a_scale * 1e-8, a_cap * 0.5);
  const double hi = std::min(a_cap * (1.0 - 1e-6), a_scale * 1e8);

  const int kGrid = 200;
  const double lratio = std::log(hi / lo) / (kGrid - 1);
  double best_a = lo;
  double best_f = -std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i < kGrid; ++i) {
    const double a = lo * std::exp(lratio * i);
    const double f = edge_phi(g_atoms, delta, a);
    if (f > best_f) {
      best_f = f;
      best_a = a;
      best_i = i;
    }
  }
  const double bl = lo * std::exp(lratio * std::max(0, best_i - 1));
  const double br = lo * std::exp(lratio * std::min(kGrid - 1, best_i + 1));
  const double refined = golden_max(g_atoms, delta, bl, br);
  const double fr = edge_phi(g_atoms, delta, refined);
  LeftEdge edge;
  if (fr > best_f) {
    edge.c = fr;
    edge.alpha_star = refined;
  } else {
    edge.c = best_f;
    edge.alpha_star = best_a;
  }
  edge.a_cap = a_cap;
  return edge;
}

OutlierReport outlier_roots(const GLaw& law, double delta, double gap) {
  if (law.g.size() == 0) throw ConfigError("outlier_roots: empty law");
  if (law.v_hard.rows() != law.g.size())
    throw ConfigError("outlier_roots: law lacks paired hard components");
  const int r = static_cast<int>(law.v_hard.cols());
  if (r < 1) throw ConfigError("outlier_roots: need at least one direction");

  OutlierReport rep;
  const LeftEdge le = left_edge(law.g, delta);
  rep.edge_c = le.c;
  const double zb = std::min(le.c, 0.0) - gap;
  rep.z_boundary = zb;

  if (r == 1) {
    auto s_of = [&](double z) {
      const double a = alpha_real_at(law.g, delta, z);
      return -z + spike_scalar(law, delta, a);
    };
    const double sb = s_of(zb);
    rep.s_at_boundary = sb;
    if (sb >= 0.0) {
      rep.exists = false;
      return rep;
    }
    rep.exists = true;
    double step = std::max(1.0, std::abs(zb));
    double z_lo = zb - step;
    while (s_of(z_lo) < 0.0) {
      step *= 2.0;
      z_lo = zb - step;
      if (step > 1e12)
        throw NumericalError("outlier_roots: no left bracket for the root");
    }
    double z_hi = zb;
    while (z_hi - z_lo > 1e-8) {
      const double mid = 0.5 * (z_lo + z_hi);
      (s_of(mid) < 0.0 ? z_hi : z_lo) = mid;
    }
    OutlierRoot root;
    root.z_star = 0.5 * (z_lo + z_hi);
    root.multiplicity = 1;
    rep.roots.push_back(root);
    return rep;
  }

  // Several hard directions: scan the eigenvalue branches of the spike
  // matrix left of the boundary and refine each crossing of the diagonal.
  auto branches = [&](double z) {
    const double a = alpha_real_at(law.g, delta, z);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        spike_matrix(law, delta, a));
    return Eigen::VectorXd(es.eigenvalues());
  };
  {
    const Eigen::VectorXd mu_b = branches(zb);
    rep.s_at_boundary = (mu_b.array() - zb).minCoeff();
  }
  double span = 4.0 * (1.0 + std::abs(zb));
  while (span < 1e6) {
    const Eigen::VectorXd mu = branches(zb - span);
    if ((mu.array() - (zb - span)).minCoeff() > 0.0) break;
    span *= 2.0;
  }
  const int kScan = 200;
  std::vector<double> roots;
  Eigen::VectorXd prev = branches(zb - span);
  double zprev = zb - span;
  for (int i = 1; i <= kScan; ++i) {
    const double z = zb - span + span * i / kScan;
    const Eigen::VectorXd mu = branches(z);
    for (int q = 0; q < r; ++q) {
      const double dp = prev[q] - zprev;
      const double dc = mu[q] - z;
      if (dp > 0.0 && dc <= 0.0) {
        double a = zprev, b = z;
        while (b - a > 1e-8) {
          const double mid = 0.5 * (a + b);
          const double dm = branches(mid)[q] - mid;
          (dm <= 0.0 ? b : a) = mid;
        }
        roots.push_back(0.5 * (a + b));
      }
    }
    prev = mu;
    zprev = z;
  }
  std::sort(roots.begin(), roots.end());
  for (std::size_t i = 0; i < roots.size();) {
    OutlierRoot root;
    root.z_star = roots[i];
    root.multiplicity = 1;
    std::size_t j = i + 1;
    while (j < roots.size() && roots[j] - roots[i] <= 1e-6) {
      ++root.multiplicity;
      ++j;
    }
    rep.roots.push_back(root);
    i = j;
  }
  rep.exists = !rep.roots.empty();
  return rep;
}

std::vector<double> alignment_predict(OutlierReport& report, const GLaw& law,
                                      double delta) {
  std::vector<double> out;
  const int r = static_cast<int>(law.v_hard.cols());
  const int n = static_cast<int>(law.g.size());
  for (OutlierRoot& root : report.roots) {
    const double a = alpha_real_at(law.g, delta, root.z_star);
    const double ap = alpha_prime(law.g, delta, a);
    Eigen::MatrixXd b = Eigen::MatrixXd::Identity(r, r);
    for (int i = 0; i < n; ++i) {
      const double den = delta + law.g[i] * a;
      const double w = delta * law.g[i] * law.g[i] * ap / (den * den);
      b.noalias() += (w / n) * law.v_hard.row(i).transpose() *
                     law.v_hard.row(i);
    }
    if (r == 1) {
      root.omega = 1.0 / b(0, 0);
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          spike_matrix(law, delta, a));
      std::vector<int> cluster;
      for (int q = 0; q < r; ++q)
        if (std::abs(es.eigenvalues()[q] - root.z_star) <=
            1e-6 * std::max(1.0, std::abs(root.z_star)) + 1e-6)
          cluster.push_back(q);
      if (cluster.empty()) {
        // fall back to the branches nearest the root
        double bestgap = std::numeric_limits<double>::infinity();
        int bestq = 0;
        for (int q = 0; q < r; ++q) {
          const double gapq = std::abs(es.eigenvalues()[q] - root.z_star);
          if (gapq < bestgap) {
            bestgap = gapq;
            bestq = q;
          }
        }
        cluster.push_back(bestq);
      }
      Eigen::MatrixXd s(r, static_cast<int>(cluster.size()));
      for (std::size_t q = 0; q < cluster.size(); ++q)
        s.col(static_cast<int>(q)) = es.eigenvectors().col(cluster[q]);
      root.omega = (s.transpose() * b * s).inverse().trace();
    }
    out.push_back(root.omega);
  }
  return out;
}

namespace {

bool outlier_exists_probe(const GLaw& law, double delta, double gap) {
  const LeftEdge le = left_edge(law.g, delta);
  const double zb = std::min(le.c, 0.0) - gap;
  const double a = alpha_real_at(law.g, delta, zb);
  if (law.v_hard.cols() == 1)
    return -zb + spike_scalar(law, delta, a) < 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      spike_matrix(law, delta, a));
  return (es.eigenvalues().array() - zb).minCoeff() < 0.0;
}

}  // namespace

ThresholdPoint threshold_at_t(const DmftConfig& base, int t, double tol,
                              const std::vector<std::uint64_t>& seeds,
                              double gap, double bracket_lo,
                              double bracket_hi) {
  if (seeds.empty()) throw ConfigError("threshold_at_t: need at least one seed");
  if (!(tol > 0.0)) throw ConfigError("threshold_at_t: tolerance must be > 0");
  constexpr double kDeltaCap = 64.0;
  ThresholdPoint out;
  out.t = t;
  for (const std::uint64_t seed : seeds) {
    auto exists_at = [&](double dl) {
      DmftConfig cfg = base;
      cfg.delta = dl;
      cfg.seed = seed;
      DmftScalar engine(cfg);
      engine.run_to(t);
      return outlier_exists_probe(engine.law_of_g(t), dl, gap);
    };
    double lo = std::max(bracket_lo, 1e-3);
    double hi = std::max(bracket_hi, lo * 1.5);
    bool ehi = exists_at(hi);
    while (!ehi && hi < kDeltaCap) {
      hi = std::min(kDeltaCap, hi * 2.0);
      ehi = exists_at(hi);
    }
    if (!ehi) {
      out.infinite = true;
      out.per_seed.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    bool elo = exists_at(lo);
    while (elo && lo > 1e-3) {
      hi = lo;
      lo = std::max(1e-3, lo * 0.5);
      elo = exists_at(lo);
    }
    if (elo) {
      out.per_seed.push_back(lo);
      continue;
    }
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      (exists_at(mid) ? hi : lo) = mid;
    }
    out.per_seed.push_back(0.5 * (lo + hi));
  }
  if (out.infinite) {
    out.delta_star = std::numeric_limits<double>::infinity();
    out.delta_star_std = 0.0;
    return out;
  }
  double mean = 0.0;
  for (double v : out.per_seed) mean += v;
  mean /= static_cast<double>(out.per_seed.size());
  double var = 0.0;
  for (double v : out.per_seed) var += (v - mean) * (v - mean);
  out.delta_star = mean;
  out.delta_star_std =
      out.per_seed.size() > 1
          ? std::sqrt(var / static_cast<double>(out.per_seed.size() - 1))
          : 0.0;
  return out;
}

ExtrapolationFit extrapolate_inf(
    const std::vector<std::pair<int, double>>& curve) {
  std::vector<std::pair<int, double>> pts;
  for (const auto& [t, v] : curve)
    if (t >= 1 && std::isfinite(v)) pts.emplace_back(t, v);
  if (pts.size() < 6)
    throw ConfigError("extrapolate_inf: need at least 6 points with t >= 1");
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd x(n, 5);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    const double inv_t = 1.0 / pts[i].first;
    double p = 1.0;
    for (int q = 0; q < 5; ++q) {
      x(i, q) = p;
      p *= inv_t;
    }
    y[i] = pts[i].second;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < 5)
    throw ConfigError("extrapolate_inf: rank-deficient fit, need >= 5 distinct t");
  ExtrapolationFit fit;
  fit.coeffs = qr.solve(y);
  fit.delta_inf = fit.coeffs[0];
  fit.residual = std::sqrt((x * fit.coeffs - y).squaredNorm() / n);
  return fit;
}

Eigen::VectorXd compress_atoms(const Eigen::VectorXd& g, int max_atoms) {
  if (max_atoms < 1) throw ConfigError("compress_atoms: max_atoms must be >= 1");
  const int n = static_cast<int>(g.size());
  if (n <= max_atoms) return g;
  std::vector<double> sorted(g.data(), g.data() + n);
  std::sort(sorted.begin(), sorted.end());
  Eigen::VectorXd out(max_atoms);
  for (int b = 0; b < max_atoms; ++b) {
    const int lo = static_cast<int>(static_cast<long long>(n) * b / max_atoms);
    const int hi =
        static_cast<int>(static_cast<long long>(n) * (b + 1) / max_atoms);
    double acc = 0.0;
    for (int i = lo; i < hi; ++i) acc += sorted[i];
    out[b] = acc / std::max(1, hi - lo);
  }
  return out;
}

Eigen::VectorXd predicted_cdf(const Eigen::VectorXd& g_atoms, double delta,
                              const Eigen::VectorXd& grid) {
  if (grid.size() < 2) throw ConfigError("predicted_cdf: grid too small");
  const Eigen::VectorXd atoms = compress_atoms(g_atoms, 1024);
  const double eps = 1e-3;
  const int n = static_cast<int>(grid.size());
  Eigen::VectorXd density(n);
  cplx warm1 = -1.0 / cplx(grid[0], eps);
  cplx warm2 = -1.0 / cplx(grid[0], 0.5 * eps);
  for (int i = 0; i < n; ++i) {
    StieltjesSolution s1 =
        solve_complex(atoms, delta, cplx(grid[i], eps), warm1);
    StieltjesSolution s2 =
        solve_complex(atoms, delta, cplx(grid[i], 0.5 * eps), warm2);
    warm1 = s1.alpha;
    warm2 = s2.alpha;
    const double f1 = s1.alpha.imag() / kPi;
    const double f2 = s2.alpha.imag() / kPi;
    density[i] = std::max(0.0, 2.0 * f2 - f1);
  }
  Eigen::VectorXd cdf(n);
  cdf[0] = 0.0;
  for (int i = 1; i < n; ++i)
    cdf[i] = std::min(1.0, cdf[i - 1] + 0.5 * (density[i] + density[i - 1]) *
                                            (grid[i] - grid[i - 1]));
  return cdf;
}

double interp_cdf(const Eigen::VectorXd& grid, const Eigen::VectorXd& cdf,
                  double x) {
  const int n = static_cast<int>(grid.size());
  if (x <= grid[0]) return cdf[0];
  if (x >= grid[n - 1]) return cdf[n - 1];
  int lo = 0, hi = n - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    (grid[mid] <= x ? lo : hi) = mid;
  }
  const double w = (x - grid[lo]) / (grid[hi] - grid[lo]);
  return cdf[lo] + w * (cdf[hi] - cdf[lo]);
}

double mp_left_edge(double delta) {
  const double s = 1.0 / std::sqrt(delta);
  return (1.0 - s) * (1.0 - s);
}

double mp_right_edge(double delta) {
  const double s = 1.0 / std::sqrt(delta);
  return (1.0 + s) * (1.0 + s);
}

double mp_cdf(double x, double delta) {
  if (!(delta >= 1.0)) throw ConfigError("mp_cdf: needs delta >= 1");
  const double a = mp_left_edge(delta);
  const double b = mp_right_edge(delta);
  if (x <= a) return 0.0;
  if (x >= b) return 1.0;
  // substitute lambda = a + (b-a) sin^2(theta); the integrand becomes smooth
  const double tx = std::asin(std::sqrt((x - a) / (b - a)));
  const int panels = 512;
  const double h = tx / panels;
  auto f = [&](double th) {
    const double lam = a + (b - a) * std::sin(th) * std::sin(th);
    const double s2 = std::sin(2.0 * th);
    return delta * (b - a) * (b - a) * s2 * s2 / (4.0 * kPi * lam);
  };
  double acc = f(0.0) + f(tx);
  for (int i = 1; i < panels; ++i)
    acc += (i % 2 == 1 ? 4.0 : 2.0) * f(i * h);
  return std::min(1.0, acc * h / 3.0);
}

}  // namespace gds
