#include "gds/hessian.hpp"

#include <algorithm>
#include <cmath>

#include "gds/errors.hpp"
#include "gds/rng.hpp"
#include "gds/train.hpp"

namespace gds {

HessianBlock::HessianBlock(std::shared_ptr<const Eigen::MatrixXd> x,
                           Eigen::VectorXd g)
    : x_(std::move(x)), g_(std::move(g)) {
  if (!x_) throw ConfigError("hessian block: null sample matrix");
  if (g_.size() != x_->rows())
    throw ConfigError("hessian block: weight count mismatch");
}

void HessianBlock::apply(const Eigen::Ref<const Eigen::VectorXd>& v,
                         Eigen::VectorXd& out) const {
  Eigen::VectorXd xv = (*x_) * v;
  xv.array() *= g_.array();
  out.noalias() = x_->transpose() * xv;
  out /= static_cast<double>(x_->rows());
}

double HessianBlock::quad_form(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd xv = (*x_) * v;
  return xv.cwiseProduct(g_).dot(xv) / static_cast<double>(x_->rows());
}

Eigen::MatrixXd HessianBlock::dense(int budget) const {
  const int d = dim();
  if (d > budget) throw ConfigError("hessian block: dimension exceeds dense budget");
  Eigen::MatrixXd scaled = g_.asDiagonal() * (*x_);
  Eigen::MatrixXd h = x_->transpose() * scaled / static_cast<double>(x_->rows());
  return 0.5 * (h + h.transpose());
}

Eigen::VectorXd hessian_weights(const NetworkParams& params, const Activation& act,
                                const Loss& loss,
                                const Eigen::Ref<const Eigen::MatrixXd>& x,
                                const Eigen::Ref<const Eigen::VectorXd>& y, int j) {
  const int n = static_cast<int>(x.rows());
  const int m = params.m();
  if (j < 0 || j >= m) throw std::out_of_range("hessian_weights: bad neuron index");
  Eigen::MatrixXd v = x * params.theta;  // n x m
  Eigen::VectorXd g(n);
  Eigen::VectorXd vi(m);
  for (int i = 0; i < n; ++i) {
    vi = v.row(i);
    g[i] = weight_g(params, act, loss, j, vi, y[i]);
  }
  return g;
}

HessianBlock hessian_block(const NetworkParams& params, const Activation& act,
                           const Loss& loss,
                           std::shared_ptr<const Eigen::MatrixXd> x,
                           const Eigen::Ref<const Eigen::VectorXd>& y, int j) {
  Eigen::VectorXd g = hessian_weights(params, act, loss, *x, y, j);
  return HessianBlock(std::move(x), std::move(g));
}

Eigen::MatrixXd full_hessian(const NetworkParams& params, const Activation& act,
                             const Loss& loss,
                             const Eigen::Ref<const Eigen::MatrixXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& y,
                             int budget) {
  const int n = static_cast<int>(x.rows());
  const int d = params.d();
  const int m = params.m();
  if (m * d > budget) throw ConfigError("full_hessian: m*d exceeds dense budget");

  Eigen::MatrixXd v = x * params.theta;
  Eigen::MatrixXd s(n, m), ds(n, m), d2s(n, m);
  for (int j = 0; j < m; ++j) {
    const double bj = params.b[j];
    for (int i = 0; i < n; ++i) {
      const ActEval e = act.eval(v(i, j) + bj);
      s(i, j) = e.sigma;
      ds(i, j) = e.dsigma;
      d2s(i, j) = e.d2sigma;
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  Eigen::VectorXd f = inv_m * (s * params.a);
  Eigen::VectorXd dl(n), d2l(n);
  for (int i = 0; i < n; ++i) {
    const LossEval le = loss.eval(y[i], f[i]);
    dl[i] = le.dl;
    d2l[i] = le.d2l;
  }

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m * d, m * d);
  Eigen::VectorXd w(n);
  for (int j = 0; j < m; ++j) {
    for (int jp = j; jp < m; ++jp) {
      w = d2l.cwiseProduct(ds.col(j)).cwiseProduct(ds.col(jp)) *
          (params.a[j] * params.a[jp] * inv_m * inv_m);
      if (jp == j)
        w += (params.a[j] * inv_m) * dl.cwiseProduct(d2s.col(j));
      Eigen::MatrixXd blk =
          x.transpose() * (w.asDiagonal() * x) / static_cast<double>(n);
      h.block(j * d, jp * d, d, d) = blk;
      if (jp != j) h.block(jp * d, j * d, d, d) = blk.transpose();
    }
  }
  return 0.5 * (h + h.transpose());
}

EigenResult smallest_eigenpairs(const Eigen::Ref<const Eigen::MatrixXd>& dense,
                                int p) {
  const int d = static_cast<int>(dense.rows());
  if (p < 1 || p > d) throw ConfigError("smallest_eigenpairs: bad p");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
  if (es.info() != Eigen::Success)
    throw NumericalError("smallest_eigenpairs: dense eigensolve failed");
  EigenResult r;
  r.values = es.eigenvalues().head(p);
  r.vectors = es.eigenvectors().leftCols(p);
  r.residuals.resize(p);
  for (int i = 0; i < p; ++i)
    r.residuals[i] = (dense * r.vectors.col(i) - r.values[i] * r.vectors.col(i)).norm();
  return r;
}

EigenResult smallest_eigenpairs_op(
    const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>& op,
    int dim, int p, std::uint64_t seed, double tol, int max_matvecs) {
  if (p < 1 || p > dim) throw ConfigError("smallest_eigenpairs: bad p");
  if (max_matvecs <= 0) max_matvecs = 10 * dim;
  const int max_steps = std::min({dim, max_matvecs, 1500});

  Eigen::MatrixXd basis(dim, max_steps + 1);
  Eigen::VectorXd alpha(max_steps), beta(max_steps);
  {
    RngStream rng(seed, make_stream(StreamDomain::kMisc, 0xace, 0));
    Eigen::VectorXd v0(dim);
    rng.fill_normal(v0.data(), dim);
    basis.col(0) = v0.normalized();
  }

  Eigen::VectorXd w(dim), cur(dim);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  double norm_est = 0.0;
  double best_max_residual = std::numeric_limits<double>::infinity();
  int matvecs = 0;

  for (int k = 0; k < max_steps; ++k) {
    cur = basis.col(k);
    op(cur, w);
    ++matvecs;
    if (k > 0) w -= beta[k - 1] * basis.col(k - 1);
    alpha[k] = basis.col(k).dot(w);
    w -= alpha[k] * basis.col(k);
    // Full reorthogonalization, two sweeps, defeats Lanczos ghost pairs.
    auto vk = basis.leftCols(k + 1);
    w -= vk * (vk.transpose() * w);
    w -= vk * (vk.transpose() * w);
    beta[k] = w.norm();
    const bool breakdown = beta[k] <= 1e-13 * std::max(1.0, norm_est);
    const bool last = (k + 1 == max_steps);
    const bool check =
        breakdown || last || (k + 1 >= std::max(2 * p, 12) && (k + 1) % 10 == 0);
    if (!check) {
      basis.col(k + 1) = w / beta[k];
      continue;
    }

    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k + 1, k + 1);
    for (int i = 0; i <= k; ++i) {
      t(i, i) = alpha[i];
      if (i < k) {
        t(i, i + 1) = beta[i];
        t(i + 1, i) = beta[i];
      }
    }
    es.compute(t);
    norm_est = std::max(std::abs(es.eigenvalues()[0]),
                        std::abs(es.eigenvalues()[k]));
    bool done = k + 1 >= p;
    double max_res = 0.0;
    if (done) {
      for (int i = 0; i < p; ++i) {
        const double res = breakdown ? 0.0 : beta[k] * std::abs(es.eigenvectors()(k, i));
        max_res = std::max(max_res, res);
      }
      done = breakdown || max_res <= tol * std::max(norm_est, 1e-300);
    }
    best_max_residual = std::min(best_max_residual, max_res);
    if (done || breakdown || last) {
      if (!done)
        throw NumericalError(
            "smallest_eigenpairs: no convergence after " + std::to_string(matvecs) +
            " products, best residual " + std::to_string(best_max_residual));
      EigenResult r;
      r.values = es.eigenvalues().head(p);
      r.vectors.resize(dim, p);
      for (int i = 0; i < p; ++i) {
        r.vectors.col(i) = basis.leftCols(k + 1) * es.eigenvectors().col(i);
        r.vectors.col(i).normalize();
      }
      r.residuals.resize(p);
      for (int i = 0; i < p; ++i) {
        cur = r.vectors.col(i);
        op(cur, w);
        ++matvecs;
        r.residuals[i] = (w - r.values[i] * cur).norm();
      }
      r.matvecs = matvecs;
      return r;
    }
    basis.col(k + 1) = w / beta[k];
  }
  throw NumericalError("smallest_eigenpairs: iteration cap reached");
}

EigenResult smallest_eigenpairs(const HessianBlock& block, int p,
                                std::uint64_t seed, double tol,
                                int max_matvecs) {
  const int d = block.dim();
  if (d <= 2500) return smallest_eigenpairs(block.dense(2500), p);
  return smallest_eigenpairs_op(
      [&block](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
        block.apply(v, out);
      },
      d, p, seed, tol, max_matvecs);
}

double alignment(const Eigen::Ref<const Eigen::MatrixXd>& eigvecs,
                 const Eigen::Ref<const Eigen::MatrixXd>& frame) {
  if (eigvecs.rows() != frame.rows())
    throw ConfigError("alignment: dimension mismatch");
  return (frame.transpose() * eigvecs).squaredNorm();
}

namespace {

double operator_norm_cov(const Eigen::Ref<const Eigen::MatrixXd>& x,
                         std::uint64_t seed) {
  const int d = static_cast<int>(x.cols());
  RngStream rng(seed, make_stream(StreamDomain::kMisc, 0xbeef, 0));
  Eigen::VectorXd v(d);
  rng.fill_normal(v.data(), d);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd xv = x * v;
    Eigen::VectorXd nv = x.transpose() * xv / static_cast<double>(x.rows());
    lambda = nv.norm();
    if (lambda == 0.0) return 0.0;
    v = nv / lambda;
  }
  return lambda;
}

}  // namespace

SandwichReport sandwich_check(const NetworkParams& params, const Activation& act,
                              const Loss& loss,
                              const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y) {
  const int n = static_cast<int>(x.rows());
  const int d = params.d();
  const int m = params.m();

  Eigen::MatrixXd v = x * params.theta;
  Eigen::MatrixXd ds(n, m);
  Eigen::VectorXd f(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      const ActEval e = act.eval(v(i, j) + params.b[j]);
      ds(i, j) = e.dsigma;
      acc += params.a[j] * e.sigma;
    }
    f[i] = acc / static_cast<double>(m);
  }
  Eigen::VectorXd d2l(n);
  for (int i = 0; i < n; ++i) {
    const LossEval le = loss.eval(y[i], f[i]);
    if (le.d2l < 0.0)
      throw ConfigError("sandwich_check: loss must have nonnegative curvature");
    d2l[i] = le.d2l;
  }

  // Left side: min over blocks of lambda_min(a_j H_j).
  auto xptr = std::make_shared<const Eigen::MatrixXd>(x);
  double lhs = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd g = hessian_weights(params, act, loss, x, y, j);
    g *= params.a[j];
    HessianBlock blk(xptr, g);
    if (d <= 2500) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(blk.dense(2500),
                                                        Eigen::EigenvaluesOnly);
      lhs = std::min(lhs, es.eigenvalues()[0]);
    } else {
      lhs = std::min(lhs, smallest_eigenpairs(blk, 1).values[0]);
    }
  }

  // Middle: lambda_min of m times the full Hessian.
  Eigen::MatrixXd h = full_hessian(params, act, loss, x, y);
  h *= static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  const double mid = es.eigenvalues()[0];

  // Measured slack constant: ||(1/n) X^T X|| * max_i l''_i max_j (a_j s'_ij)^2.
  double curb = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < m; ++j)
      row = std::max(row, params.a[j] * params.a[j] * ds(i, j) * ds(i, j));
    curb = std::max(curb, d2l[i] * row);
  }
  const double cov_norm = operator_norm_cov(x, 99);
  SandwichReport rep;
  rep.lhs = lhs;
  rep.mid = mid;
  rep.slack = cov_norm * curb;
  const double scale = std::max({std::abs(lhs), std::abs(mid), 1.0});
  rep.lower_ok = mid >= lhs - 1e-9 * scale;
  rep.upper_ok = mid <= lhs + rep.slack / m + 1e-9 * scale;
  return rep;
}

Histogram esd(const Eigen::Ref<const Eigen::MatrixXd>& dense, int bins) {
  if (bins < 1) throw ConfigError("esd: bins must be >= 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
  const int d = static_cast<int>(dense.rows());
  Histogram hist;
  hist.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + d);
  const double lo = hist.eigenvalues.front();
  const double hi = hist.eigenvalues.back();
  const double width = (hi > lo) ? (hi - lo) : 1.0;
  hist.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b)
    hist.edges[b] = lo + width * static_cast<double>(b) / bins;
  hist.density.assign(bins, 0.0);
  for (double lam : hist.eigenvalues) {
    int b = static_cast<int>((lam - lo) / width * bins);
    b = std::clamp(b, 0, bins - 1);
    hist.density[b] += 1.0;
  }
  const double bin_w = width / bins;
  for (double& v : hist.density) v /= d * bin_w;
  return hist;
}

double ks_distance(const std::vector<double>& sorted_vals,
                   const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(sorted_vals.size());
  if (sorted_vals.empty()) throw ConfigError("ks_distance: empty sample");
  double worst = 0.0;
  for (std::size_t i = 0; i < sorted_vals.size(); ++i) {
    const double f = cdf(sorted_vals[i]);
    worst = std::max(worst, std::abs(f - static_cast<double>(i) / n));
    worst = std::max(worst, std::abs(f - static_cast<double>(i + 1) / n));
  }
  return worst;
}

SpikedModel spiked_sample(const std::function<double(double, double)>& preproc,
                          const Link& link, double delta, int d,
                          std::uint64_t seed) {
  const int k = link.k();
  const int n = static_cast<int>(std::lround(delta * d));
  if (n < 1) throw ConfigError("spiked_sample: delta * d too small");

  SpikedModel model;
  model.target = sample_target(d, k, link, Eigen::MatrixXd::Identity(k, k),
                               derive_seed(seed, 301));
  auto x = std::make_shared<Eigen::MatrixXd>(n, d);
  {
    RngStream rng(seed, make_stream(StreamDomain::kSpiked, 0, 0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) (*x)(i, j) = rng.normal();
  }
  Eigen::VectorXd eps(n);
  {
    RngStream rng(seed, make_stream(StreamDomain::kSpiked, 1, 0));
    rng.fill_normal(eps.data(), n);
  }
  model.zeta.resize(n);
  {
    RngStream rng(seed, make_stream(StreamDomain::kSpiked, 2, 0));
    for (int i = 0; i < n; ++i) model.zeta[i] = rng.uniform();
  }
  Eigen::MatrixXd z = (*x) * model.target.theta_star;
  model.y.resize(n);
  Eigen::VectorXd zi(k);
  Eigen::VectorXd g(n);
  for (int i = 0; i < n; ++i) {
    zi = z.row(i);
    model.y[i] = link.h(zi.data(), eps[i]);
    g[i] = preproc(model.y[i], model.zeta[i]);
  }
  model.block = HessianBlock(std::shared_ptr<const Eigen::MatrixXd>(x), g);
  return model;
}

}  // namespace gds
