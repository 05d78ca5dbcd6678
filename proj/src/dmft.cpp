#include "gds/dmft.hpp"

#include <algorithm>
#include <cmath>

#include "gds/errors.hpp"

namespace gds {

namespace {

std::pair<int, int> block_range(int total, int n_blocks, int b) {
  const int q = total / n_blocks;
  const int rem = total % n_blocks;
  const int lo = b * q + std::min(b, rem);
  return {lo, lo + q + (b < rem ? 1 : 0)};
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw NumericalError(std::string(what) + ": eigen factorization failed");
  const auto& lam = es.eigenvalues();
  const double lmax = std::max(std::abs(lam[lam.size() - 1]), std::abs(lam[0]));
  if (lam[0] < -1e-8 * std::max(1.0, lmax))
    throw NumericalError(std::string(what) + ": covariance not PSD, min eigenvalue " +
                         std::to_string(lam[0]));
  return es.eigenvectors() *
         lam.cwiseMax(1e-12).cwiseSqrt().asDiagonal();
}

constexpr int kBlocks = 32;
constexpr std::uint64_t kFinalPassSalt = 1ull << 30;

}  // namespace

DmftScalar::DmftScalar(const DmftConfig& cfg) : cfg_(cfg) {
  if (cfg.n_paths < 1000) throw ConfigError("dmft: need at least 1e3 paths");
  if (!(cfg.eta > 0.0)) throw ConfigError("dmft: eta must be positive");
  if (!(cfg.delta > 0.0)) throw ConfigError("dmft: delta must be positive");
  if (cfg.link.k() != 1)
    throw ConfigError("scalar dmft engine requires a k = 1 link");
  check_loss_link(cfg.loss, cfg.link);
  n_pairs_ = (cfg.n_paths + 1) / 2;
  l0_ = {1.0};
  lstar_ = {0.0};
  lq_ = Eigen::MatrixXd::Zero(1, 1);
  c_ell_ = Eigen::MatrixXd::Zero(1, 1);
  r_ell_ = Eigen::MatrixXd::Zero(1, 1);
  r_ell_star_ = {};
  c_theta_ = Eigen::MatrixXd::Ones(1, 1);
}

void DmftScalar::propagate_path(int t, const Eigen::VectorXd& w, double wstar,
                                double eps, Eigen::VectorXd& v,
                                Eigen::VectorXd& f, Eigen::VectorXd& fp,
                                Eigen::VectorXd& dfdy) const {
  const double y = cfg_.link.h(&wstar, eps);
  const double inv_ed = 1.0 / (cfg_.eta * cfg_.delta);
  for (int s = 0; s <= t; ++s) {
    double acc = 0.0;
    for (int sp = 0; sp < s; ++sp) acc += lq_(s, sp) * f[sp];
    v[s] = w[s] - acc * inv_ed;
    const ActEval ae = cfg_.act.eval(v[s] + cfg_.b0);
    const LossEval le = cfg_.loss.eval(y, cfg_.a0 * ae.sigma);
    f[s] = cfg_.eta * cfg_.a0 * le.dl * ae.dsigma;
    fp[s] = cfg_.eta * cfg_.a0 *
            (le.d2l * ae.dsigma * ae.dsigma * cfg_.a0 + le.dl * ae.d2sigma);
    dfdy[s] = cfg_.eta * cfg_.a0 * le.dy_dl * ae.dsigma;
  }
}

Eigen::MatrixXd DmftScalar::sample_factor(int t) const {
  Eigen::MatrixXd cov = c_theta_.topLeftCorner(t + 1, t + 1);
  Eigen::Map<const Eigen::VectorXd> cs(lstar_.data(), t + 1);
  cov -= cs * cs.transpose();
  return psd_factor(cov, "dmft sampling");
}

void DmftScalar::signal_jacobian(int t, const Eigen::VectorXd& fp,
                                 const Eigen::VectorXd& dfdy, double dh,
                                 Eigen::VectorXd& js) const {
  js[0] = 0.0;
  for (int s = 1; s <= t; ++s) {
    double sum = 0.0;
    for (int sp = 0; sp < s; ++sp)
      sum += lq_(s, sp) * (fp[sp] * js[sp] + dfdy[sp] * dh);
    js[s] = -sum / (cfg_.eta * cfg_.delta);
  }
}

void DmftScalar::noise_jacobian(int t, const Eigen::VectorXd& fp,
                                Eigen::VectorXd& jw) const {
  jw[t] = 1.0;
  for (int s = t - 1; s >= 0; --s) {
    double sum = 0.0;
    for (int sp = s + 1; sp <= t; ++sp) sum += jw[sp] * lq_(sp, s);
    jw[s] = -sum * fp[s] / (cfg_.eta * cfg_.delta);
  }
}

DmftScalar::PathProbe DmftScalar::probe_path(const Eigen::VectorXd& w,
                                             double wstar, double eps,
                                             int t) const {
  if (t < 0 || t > t_done_)
    throw ConfigError("dmft probe: time beyond advanced horizon");
  if (w.size() != t + 1) throw ConfigError("dmft probe: path length mismatch");
  PathProbe pr;
  pr.v.resize(t + 1);
  pr.f.resize(t + 1);
  pr.fp.resize(t + 1);
  pr.dfdy.resize(t + 1);
  pr.jw.resize(t + 1);
  pr.js.resize(t + 1);
  propagate_path(t, w, wstar, eps, pr.v, pr.f, pr.fp, pr.dfdy);
  double dh = 0.0;
  cfg_.link.dh_dz(&wstar, eps, &dh);
  signal_jacobian(t, pr.fp, pr.dfdy, dh, pr.js);
  noise_jacobian(t, pr.fp, pr.jw);
  return pr;
}

void DmftScalar::advance(ThreadPool* pool) {
  const int t = t_done_;
  const int tp1 = t + 1;
  const Eigen::MatrixXd factor = sample_factor(t);

  std::vector<Accum> acc(kBlocks);
  auto do_block = [&](std::size_t b) {
    Accum& a = acc[b];
    a.gram_ff = Eigen::MatrixXd::Zero(tp1, tp1);
    a.rl_row = Eigen::VectorXd::Zero(tp1);
    a.rl_star = 0.0;
    const auto [p_lo, p_hi] = block_range(n_pairs_, kBlocks, static_cast<int>(b));
    RngStream rng(cfg_.seed,
                  make_stream(StreamDomain::kDmftPaths,
                              static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(b)));
    Eigen::VectorXd xi(tp1), wtil(tp1), w(tp1), v(tp1), f(tp1), fp(tp1),
        dfdy(tp1), js(tp1), jw(tp1);
    for (int p = p_lo; p < p_hi; ++p) {
      const double u = rng.normal();
      for (int i = 0; i < tp1; ++i) xi[i] = rng.normal();
      const double eps = rng.normal();
      wtil.noalias() = factor * xi;
      for (int sign = 0; sign < 2; ++sign) {
        const double wstar = (sign == 0) ? u : -u;
        for (int s = 0; s <= t; ++s) w[s] = wtil[s] + lstar_[s] * wstar;
        propagate_path(t, w, wstar, eps, v, f, fp, dfdy);

        double dh = 0.0;
        cfg_.link.dh_dz(&wstar, eps, &dh);
        signal_jacobian(t, fp, dfdy, dh, js);
        noise_jacobian(t, fp, jw);

        for (int uu = 0; uu <= t; ++uu)
          for (int vv = 0; vv <= uu; ++vv) a.gram_ff(uu, vv) += f[uu] * f[vv];
        a.rl_row += fp[t] * jw;
        a.rl_star += fp[t] * js[t] + dfdy[t] * dh;
      }
    }
  };
  if (pool != nullptr && pool->workers() > 1) {
    pool->run_blocks(kBlocks, do_block);
  } else {
    for (int b = 0; b < kBlocks; ++b) do_block(b);
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(tp1, tp1);
  Eigen::VectorXd rl_row = Eigen::VectorXd::Zero(tp1);
  double rl_star = 0.0;
  for (const Accum& a : acc) {
    gram += a.gram_ff;
    rl_row += a.rl_row;
    rl_star += a.rl_star;
  }
  const double inv_n = 1.0 / (2.0 * n_pairs_);
  const double eta = cfg_.eta;
  for (int uu = 0; uu <= t; ++uu)
    for (int vv = 0; vv <= uu; ++vv) {
      const double val = gram(uu, vv) * inv_n / (eta * eta);
      c_ell_(uu, vv) = val;
      c_ell_(vv, uu) = val;
    }
  for (int s = 0; s <= t; ++s) r_ell_(t, s) = rl_row[s] * inv_n / eta;
  r_ell_star_[t] = rl_star * inv_n / eta;

  double new_l0 = l0_[t];
  double new_lstar = lstar_[t];
  for (int s = 0; s <= t; ++s) {
    new_l0 -= eta * r_ell_(t, s) * l0_[s];
    new_lstar -= eta * r_ell_(t, s) * lstar_[s];
  }
  new_lstar -= eta * r_ell_star_[t];
  l0_[tp1] = new_l0;
  lstar_[tp1] = new_lstar;
  for (int u = 0; u <= t; ++u) {
    double sum = 0.0;
    for (int s = u + 1; s <= t; ++s) sum += r_ell_(t, s) * lq_(s, u);
    lq_(tp1, u) = lq_(t, u) - eta * sum + (u == t ? eta : 0.0);
  }

  // Correlation kernels recomputed exactly from the coefficient maps and the
  // refreshed force Gram, so the stacked table stays PSD by construction.
  Eigen::Map<const Eigen::VectorXd> l0v(l0_.data(), tp1 + 1);
  Eigen::Map<const Eigen::VectorXd> lsv(lstar_.data(), tp1 + 1);
  const auto lqs = lq_.topLeftCorner(tp1 + 1, tp1);
  c_theta_.topLeftCorner(tp1 + 1, tp1 + 1) =
      l0v * l0v.transpose() + lsv * lsv.transpose() +
      lqs * (c_ell_.topLeftCorner(tp1, tp1) / cfg_.delta) * lqs.transpose();

  t_done_ = tp1;
}

void DmftScalar::final_pass(ThreadPool* pool) {
  const int T = t_done_;
  const int tp1 = T + 1;
  const Eigen::MatrixXd factor = sample_factor(T);
  const int n = 2 * n_pairs_;
  cloud_v_.resize(n, tp1);
  cloud_wstar_.resize(n);
  cloud_eps_.resize(n);

  auto do_block = [&](std::size_t b) {
    const auto [p_lo, p_hi] = block_range(n_pairs_, kBlocks, static_cast<int>(b));
    RngStream rng(cfg_.seed,
                  make_stream(StreamDomain::kDmftPaths,
                              kFinalPassSalt + static_cast<std::uint64_t>(T),
                              static_cast<std::uint64_t>(b)));
    Eigen::VectorXd xi(tp1), wtil(tp1), w(tp1), v(tp1), f(tp1), fp(tp1),
        dfdy(tp1);
    for (int p = p_lo; p < p_hi; ++p) {
      const double u = rng.normal();
      for (int i = 0; i < tp1; ++i) xi[i] = rng.normal();
      const double eps = rng.normal();
      wtil.noalias() = factor * xi;
      for (int sign = 0; sign < 2; ++sign) {
        const double wstar = (sign == 0) ? u : -u;
        for (int s = 0; s <= T; ++s) w[s] = wtil[s] + lstar_[s] * wstar;
        propagate_path(T, w, wstar, eps, v, f, fp, dfdy);
        const int row = 2 * p + sign;
        cloud_v_.row(row) = v;
        cloud_wstar_[row] = wstar;
        cloud_eps_[row] = eps;
      }
    }
  };
  if (pool != nullptr && pool->workers() > 1) {
    pool->run_blocks(kBlocks, do_block);
  } else {
    for (int b = 0; b < kBlocks; ++b) do_block(b);
  }
}

void DmftScalar::run_to(int T, ThreadPool* pool) {
  if (T < 0) throw ConfigError("dmft: horizon must be >= 0");
  if (T >= static_cast<int>(l0_.size())) {
    l0_.resize(T + 1, 0.0);
    lstar_.resize(T + 1, 0.0);
  }
  const int need = std::max(T, 1);
  if (lq_.rows() < T + 1)
    lq_.conservativeResizeLike(Eigen::MatrixXd::Zero(T + 1, T + 1));
  if (c_ell_.rows() < need) {
    c_ell_.conservativeResizeLike(Eigen::MatrixXd::Zero(need, need));
    r_ell_.conservativeResizeLike(Eigen::MatrixXd::Zero(need, need));
  }
  if (static_cast<int>(r_ell_star_.size()) < need)
    r_ell_star_.resize(need, 0.0);
  if (c_theta_.rows() < T + 1)
    c_theta_.conservativeResizeLike(Eigen::MatrixXd::Zero(T + 1, T + 1));

  while (t_done_ < T) advance(pool);
  if (cloud_v_.cols() != t_done_ + 1 || cloud_v_.rows() != 2 * n_pairs_)
    final_pass(pool);
}

DmftKernels DmftScalar::kernels() const {
  const int T = t_done_;
  DmftKernels kr;
  kr.T = T;
  kr.m = 1;
  kr.k = 1;
  kr.delta = cfg_.delta;
  kr.eta = cfg_.eta;
  kr.c_theta = c_theta_.topLeftCorner(T + 1, T + 1);
  kr.c_theta_star.resize(T + 1, 1);
  for (int s = 0; s <= T; ++s) kr.c_theta_star(s, 0) = lstar_[s];
  kr.c_ell = c_ell_.topLeftCorner(T, T);
  kr.r_theta = lq_.topLeftCorner(T + 1, T + 1) / cfg_.eta;
  kr.r_ell = r_ell_.topLeftCorner(T, T);
  kr.r_ell_star.resize(T, 1);
  for (int s = 0; s < T; ++s) kr.r_ell_star(s, 0) = r_ell_star_[s];
  return kr;
}

GLaw DmftScalar::law_of_g(int t) const {
  if (cloud_v_.rows() == 0 || t >= cloud_v_.cols())
    throw ConfigError("dmft: no retained samples at requested time");
  const int n = static_cast<int>(cloud_v_.rows());
  GLaw law;
  law.t = t;
  law.j = 0;
  law.g.resize(n);
  law.v_hard.resize(n, 1);
  Eigen::VectorXd v(1);
  for (int i = 0; i < n; ++i) {
    const double wstar = cloud_wstar_[i];
    const double y = cfg_.link.h(&wstar, cloud_eps_[i]);
    const ActEval ae = cfg_.act.eval(cloud_v_(i, t) + cfg_.b0);
    const LossEval le = cfg_.loss.eval(y, cfg_.a0 * ae.sigma);
    law.g[i] = le.d2l * ae.dsigma * ae.dsigma + le.dl * ae.d2sigma;
    law.v_hard(i, 0) = wstar;
  }
  return law;
}

double DmftScalar::stationarity_gap(int t, int s) const {
  if (std::max(t, s) >= cloud_v_.cols())
    throw ConfigError("dmft: time beyond retained horizon");
  return (cloud_v_.col(t) - cloud_v_.col(s)).squaredNorm() /
         static_cast<double>(cloud_v_.rows());
}

double DmftScalar::second_moment_v(int t) const {
  if (t >= cloud_v_.cols()) throw ConfigError("dmft: time beyond horizon");
  return cloud_v_.col(t).squaredNorm() / static_cast<double>(cloud_v_.rows());
}

double DmftScalar::mean_g(int t) const {
  GLaw law = law_of_g(t);
  return law.g.mean();
}

// ---------------------------------------------------------------------------
// General width/latent-dimension engine.

DmftGeneric::DmftGeneric(const DmftConfig& cfg, int m, int k, Eigen::VectorXd a,
                         Eigen::VectorXd b)
    : cfg_(cfg), m_(m), k_(k) {
  if (cfg.n_paths < 1000) throw ConfigError("dmft: need at least 1e3 paths");
  if (m < 1 || k < 1) throw ConfigError("dmft: m, k must be >= 1");
  if (cfg.link.k() != k) throw ConfigError("dmft: link latent dim mismatch");
  check_loss_link(cfg.loss, cfg.link);
  a_ = a.size() ? a : Eigen::VectorXd::Constant(m, cfg.a0);
  b_ = b.size() ? b : Eigen::VectorXd::Constant(m, cfg.b0);
  if (a_.size() != m || b_.size() != m)
    throw ConfigError("dmft: a, b must have length m");
  n_pairs_ = (cfg.n_paths + 1) / 2;
  l0_ = {Eigen::MatrixXd::Identity(m, m)};
  lstar_ = {Eigen::MatrixXd::Zero(m, k)};
  lq_ = {{}};
  c_theta_ = Eigen::MatrixXd::Identity(m, m);
}

void DmftGeneric::propagate_path(int t, const Eigen::MatrixXd& w,
                                 const Eigen::VectorXd& wstar, double eps,
                                 Eigen::MatrixXd& v, Eigen::MatrixXd& f,
                                 std::vector<Eigen::MatrixXd>& dvf,
                                 std::vector<Eigen::MatrixXd>& dwf) const {
  const double y = cfg_.link.h(wstar.data(), eps);
  Eigen::VectorXd dh(k_);
  cfg_.link.dh_dz(wstar.data(), eps, dh.data());
  const double inv_m = 1.0 / static_cast<double>(m_);
  Eigen::VectorXd sig(m_), dsig(m_), d2sig(m_);
  for (int s = 0; s <= t; ++s) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(m_);
    for (int sp = 0; sp < s; ++sp) acc.noalias() += lq_[s][sp] * f.col(sp);
    v.col(s) = w.col(s) - acc / (cfg_.eta * cfg_.delta);
    double fout = 0.0;
    for (int j = 0; j < m_; ++j) {
      const ActEval ae = cfg_.act.eval(v(j, s) + b_[j]);
      sig[j] = ae.sigma;
      dsig[j] = ae.dsigma;
      d2sig[j] = ae.d2sigma;
      fout += a_[j] * ae.sigma;
    }
    fout *= inv_m;
    const LossEval le = cfg_.loss.eval(y, fout);
    for (int j = 0; j < m_; ++j)
      f(j, s) = cfg_.eta * inv_m * a_[j] * le.dl * dsig[j];
    Eigen::MatrixXd dv(m_, m_);
    for (int j = 0; j < m_; ++j)
      for (int l = 0; l < m_; ++l)
        dv(j, l) = cfg_.eta * inv_m * a_[j] *
                   (le.d2l * dsig[j] * a_[l] * dsig[l] * inv_m +
                    (j == l ? le.dl * d2sig[j] : 0.0));
    dvf[s] = dv;
    Eigen::MatrixXd dw(m_, k_);
    for (int j = 0; j < m_; ++j)
      dw.row(j) = (cfg_.eta * inv_m * a_[j] * le.dy_dl * dsig[j]) * dh.transpose();
    dwf[s] = dw;
  }
}

Eigen::MatrixXd DmftGeneric::sample_factor(int t) const {
  const int dim = (t + 1) * m_;
  Eigen::MatrixXd cstar(dim, k_);
  for (int s = 0; s <= t; ++s) cstar.middleRows(s * m_, m_) = lstar_[s];
  Eigen::MatrixXd cov =
      c_theta_.topLeftCorner(dim, dim) - cstar * cstar.transpose();
  return psd_factor(cov, "dmft sampling");
}

void DmftGeneric::advance() {
  const int t = t_done_;
  const int tp1 = t + 1;
  const int dim = tp1 * m_;
  const Eigen::MatrixXd factor = sample_factor(t);
  Eigen::MatrixXd cstar(dim, k_);
  for (int s = 0; s <= t; ++s) cstar.middleRows(s * m_, m_) = lstar_[s];

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<Eigen::MatrixXd> rl_row(tp1, Eigen::MatrixXd::Zero(m_, m_));
  Eigen::MatrixXd rl_star = Eigen::MatrixXd::Zero(m_, k_);

  for (int b = 0; b < kBlocks; ++b) {
    const auto [p_lo, p_hi] = block_range(n_pairs_, kBlocks, b);
    RngStream rng(cfg_.seed,
                  make_stream(StreamDomain::kDmftPaths,
                              static_cast<std::uint64_t>(t),
                              static_cast<std::uint64_t>(b)));
    Eigen::VectorXd u(k_), xi(dim), eta_v;
    Eigen::MatrixXd w(m_, tp1), v(m_, tp1), f(m_, tp1);
    std::vector<Eigen::MatrixXd> dvf(tp1), dwf(tp1);
    std::vector<Eigen::MatrixXd> js(tp1);
    std::vector<Eigen::MatrixXd> jw(tp1);
    for (int p = p_lo; p < p_hi; ++p) {
      for (int i = 0; i < k_; ++i) u[i] = rng.normal();
      for (int i = 0; i < dim; ++i) xi[i] = rng.normal();
      const double eps = rng.normal();
      Eigen::VectorXd wtil = factor * xi;
      for (int sign = 0; sign < 2; ++sign) {
        const Eigen::VectorXd wstar = (sign == 0) ? u : Eigen::VectorXd(-u);
        Eigen::VectorXd wflat = wtil + cstar * wstar;
        for (int s = 0; s <= t; ++s) w.col(s) = wflat.segment(s * m_, m_);
        propagate_path(t, w, wstar, eps, v, f, dvf, dwf);

        js[0] = Eigen::MatrixXd::Zero(m_, k_);
        for (int s = 1; s <= t; ++s) {
          Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m_, k_);
          for (int sp = 0; sp < s; ++sp)
            sum.noalias() += lq_[s][sp] * (dvf[sp] * js[sp] + dwf[sp]);
          js[s] = -sum / (cfg_.eta * cfg_.delta);
        }
        jw[t] = Eigen::MatrixXd::Identity(m_, m_);
        for (int s = t - 1; s >= 0; --s) {
          Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m_, m_);
          for (int sp = s + 1; sp <= t; ++sp) sum.noalias() += jw[sp] * lq_[sp][s];
          jw[s] = -(sum * dvf[s]) / (cfg_.eta * cfg_.delta);
        }

        for (int uu = 0; uu <= t; ++uu)
          for (int vv = 0; vv <= uu; ++vv)
            gram.block(uu * m_, vv * m_, m_, m_).noalias() +=
                f.col(uu) * f.col(vv).transpose();
        for (int s = 0; s <= t; ++s) rl_row[s].noalias() += dvf[t] * jw[s];
        rl_star.noalias() += dvf[t] * js[t] + dwf[t];
      }
    }
  }

  const double inv_n = 1.0 / (2.0 * n_pairs_);
  const double eta = cfg_.eta;
  if (c_ell_.rows() < dim)
    c_ell_.conservativeResizeLike(Eigen::MatrixXd::Zero(dim, dim));
  for (int uu = 0; uu <= t; ++uu)
    for (int vv = 0; vv <= uu; ++vv) {
      Eigen::MatrixXd blk = gram.block(uu * m_, vv * m_, m_, m_) * inv_n / (eta * eta);
      c_ell_.block(uu * m_, vv * m_, m_, m_) = blk;
      c_ell_.block(vv * m_, uu * m_, m_, m_) = blk.transpose();
    }
  if (static_cast<int>(r_ell_.size()) < tp1) r_ell_.resize(tp1);
  r_ell_[t].assign(tp1, Eigen::MatrixXd());
  for (int s = 0; s <= t; ++s) r_ell_[t][s] = rl_row[s] * inv_n / eta;
  r_ell_star_.resize(tp1);
  r_ell_star_[t] = rl_star * inv_n / eta;

  Eigen::MatrixXd new_l0 = l0_[t];
  Eigen::MatrixXd new_lstar = lstar_[t];
  for (int s = 0; s <= t; ++s) {
    new_l0.noalias() -= eta * r_ell_[t][s] * l0_[s];
    new_lstar.noalias() -= eta * r_ell_[t][s] * lstar_[s];
  }
  new_lstar -= eta * r_ell_star_[t];
  l0_.push_back(new_l0);
  lstar_.push_back(new_lstar);
  lq_.emplace_back(tp1);
  for (int uu = 0; uu <= t; ++uu) {
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m_, m_);
    for (int s = uu + 1; s <= t; ++s) sum.noalias() += r_ell_[t][s] * lq_[s][uu];
    Eigen::MatrixXd prev = (uu < t) ? lq_[t][uu] : Eigen::MatrixXd::Zero(m_, m_);
    lq_.back()[uu] = prev - eta * sum;
    if (uu == t)
      lq_.back()[uu] += eta * Eigen::MatrixXd::Identity(m_, m_);
  }

  const int dim2 = (tp1 + 1) * m_;
  Eigen::MatrixXd l0s(dim2, m_), lss(dim2, k_);
  Eigen::MatrixXd lqs = Eigen::MatrixXd::Zero(dim2, dim);
  for (int s = 0; s <= tp1; ++s) {
    l0s.middleRows(s * m_, m_) = l0_[s];
    lss.middleRows(s * m_, m_) = lstar_[s];
    for (int uu = 0; uu < s && uu <= t; ++uu)
      lqs.block(s * m_, uu * m_, m_, m_) = lq_[s][uu];
  }
  if (c_theta_.rows() < dim2)
    c_theta_.conservativeResizeLike(Eigen::MatrixXd::Zero(dim2, dim2));
  c_theta_.topLeftCorner(dim2, dim2) =
      l0s * l0s.transpose() + lss * lss.transpose() +
      lqs * (c_ell_.topLeftCorner(dim, dim) / cfg_.delta) * lqs.transpose();

  t_done_ = tp1;
}

void DmftGeneric::final_pass() {
  const int T = t_done_;
  const int tp1 = T + 1;
  const int dim = tp1 * m_;
  const Eigen::MatrixXd factor = sample_factor(T);
  Eigen::MatrixXd cstar(dim, k_);
  for (int s = 0; s <= T; ++s) cstar.middleRows(s * m_, m_) = lstar_[s];

  const int n = 2 * n_pairs_;
  cloud_v_.assign(n, Eigen::MatrixXd(m_, tp1));
  cloud_wstar_.resize(n, k_);
  cloud_eps_.resize(n);

  for (int b = 0; b < kBlocks; ++b) {
    const auto [p_lo, p_hi] = block_range(n_pairs_, kBlocks, b);
    RngStream rng(cfg_.seed,
                  make_stream(StreamDomain::kDmftPaths,
                              kFinalPassSalt + static_cast<std::uint64_t>(T),
                              static_cast<std::uint64_t>(b)));
    Eigen::VectorXd u(k_), xi(dim);
    Eigen::MatrixXd w(m_, tp1), v(m_, tp1), f(m_, tp1);
    std::vector<Eigen::MatrixXd> dvf(tp1), dwf(tp1);
    for (int p = p_lo; p < p_hi; ++p) {
      for (int i = 0; i < k_; ++i) u[i] = rng.normal();
      for (int i = 0; i < dim; ++i) xi[i] = rng.normal();
      const double eps = rng.normal();
      Eigen::VectorXd wtil = factor * xi;
      for (int sign = 0; sign < 2; ++sign) {
        const Eigen::VectorXd wstar = (sign == 0) ? u : Eigen::VectorXd(-u);
        Eigen::VectorXd wflat = wtil + cstar * wstar;
        for (int s = 0; s <= T; ++s) w.col(s) = wflat.segment(s * m_, m_);
        propagate_path(T, w, wstar, eps, v, f, dvf, dwf);
        const int row = 2 * p + sign;
        cloud_v_[row] = v;
        cloud_wstar_.row(row) = wstar;
        cloud_eps_[row] = eps;
      }
    }
  }
}

void DmftGeneric::run_to(int T) {
  if (T < 0) throw ConfigError("dmft: horizon must be >= 0");
  while (t_done_ < T) advance();
  if (cloud_v_.empty() ||
      static_cast<int>(cloud_v_.front().cols()) != t_done_ + 1)
    final_pass();
}

DmftKernels DmftGeneric::kernels() const {
  const int T = t_done_;
  DmftKernels kr;
  kr.T = T;
  kr.m = m_;
  kr.k = k_;
  kr.delta = cfg_.delta;
  kr.eta = cfg_.eta;
  kr.c_theta = c_theta_.topLeftCorner((T + 1) * m_, (T + 1) * m_);
  kr.c_theta_star.resize((T + 1) * m_, k_);
  for (int s = 0; s <= T; ++s)
    kr.c_theta_star.middleRows(s * m_, m_) = lstar_[s];
  kr.c_ell = c_ell_.topLeftCorner(T * m_, T * m_);
  kr.r_theta = Eigen::MatrixXd::Zero((T + 1) * m_, (T + 1) * m_);
  for (int tt = 0; tt <= T; ++tt)
    for (int s = 0; s < tt; ++s)
      kr.r_theta.block(tt * m_, s * m_, m_, m_) = lq_[tt][s] / cfg_.eta;
  kr.r_ell = Eigen::MatrixXd::Zero(T * m_, T * m_);
  for (int tt = 0; tt < T; ++tt)
    for (int s = 0; s <= tt; ++s)
      kr.r_ell.block(tt * m_, s * m_, m_, m_) = r_ell_[tt][s];
  kr.r_ell_star.resize(T * m_, k_);
  for (int tt = 0; tt < T; ++tt)
    kr.r_ell_star.middleRows(tt * m_, m_) = r_ell_star_[tt];
  return kr;
}

GLaw DmftGeneric::law_of_g(int t, int j, const Eigen::MatrixXd& u_hard) const {
  if (cloud_v_.empty() || t >= static_cast<int>(cloud_v_.front().cols()))
    throw ConfigError("dmft: no retained samples at requested time");
  if (j < 0 || j >= m_) throw std::out_of_range("dmft: bad neuron index");
  if (u_hard.rows() != k_) throw ConfigError("dmft: u_hard row mismatch");
  const int n = static_cast<int>(cloud_v_.size());
  const int r = static_cast<int>(u_hard.cols());
  GLaw law;
  law.t = t;
  law.j = j;
  law.g.resize(n);
  law.v_hard.resize(n, r);
  const double inv_m = 1.0 / static_cast<double>(m_);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd wstar = cloud_wstar_.row(i);
    const double y = cfg_.link.h(wstar.data(), cloud_eps_[i]);
    double fout = 0.0;
    for (int l = 0; l < m_; ++l)
      fout += a_[l] * cfg_.act.sigma(cloud_v_[i](l, t) + b_[l]);
    fout *= inv_m;
    const LossEval le = cfg_.loss.eval(y, fout);
    if (m_ > 1) {
      law.g[i] = le.dl * cfg_.act.d2sigma(cloud_v_[i](j, t) + b_[j]);
    } else {
      const ActEval ae = cfg_.act.eval(cloud_v_[i](0, t) + b_[0]);
      law.g[i] = le.d2l * ae.dsigma * ae.dsigma + le.dl * ae.d2sigma;
    }
    law.v_hard.row(i) = (u_hard.transpose() * wstar).transpose();
  }
  return law;
}

double DmftGeneric::second_moment_v(int t, int j) const {
  if (cloud_v_.empty()) throw ConfigError("dmft: no retained samples");
  double acc = 0.0;
  for (const auto& v : cloud_v_) acc += v(j, t) * v(j, t);
  return acc / static_cast<double>(cloud_v_.size());
}

}  // namespace gds
