#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>

#include "gds/errors.hpp"

namespace gds {

inline double norm_pdf(double z) {
  return 0.3989422804014326779399461 * std::exp(-0.5 * z * z);
}

inline double norm_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.7071067811865475244008444);
}

struct ActEval {
  double sigma;
  double dsigma;
  double d2sigma;
};

// Activation with closed-form first and second derivatives. GeLU and the
// saturating Gaussian bump are C^2 with bounded derivatives and are accepted
// everywhere; ReLU (second derivative taken as identically zero) is accepted
// by the trainer only, never by spectral predictions.
class Activation {
 public:
  enum class Kind { GeLU, QuadGauss, ReLU, Custom };

  static Activation gelu() {
    Activation a;
    a.kind_ = Kind::GeLU;
    a.name_ = "gelu";
    a.sup_dsigma_ = 1.1289383;   // attained at z = sqrt(2)
    a.sup_d2sigma_ = 0.7978845608028654;  // 2 phi(0)
    a.spectral_ok_ = true;
    return a;
  }

  static Activation quad_gauss(double alpha = 9.0, double beta = 1.0 / 3.0) {
    Activation a;
    a.kind_ = Kind::QuadGauss;
    a.name_ = "quad";
    a.qa_ = alpha;
    a.qb_ = beta;
    // |sigma'| peaks at z = 1/(beta sqrt(2)); |sigma''| at z = 0.
    a.sup_dsigma_ = alpha * beta * std::sqrt(2.0) * std::exp(-0.5);
    a.sup_d2sigma_ = 2.0 * alpha * beta * beta;
    a.spectral_ok_ = true;
    return a;
  }

  static Activation relu() {
    Activation a;
    a.kind_ = Kind::ReLU;
    a.name_ = "relu";
    a.sup_dsigma_ = 1.0;
    a.sup_d2sigma_ = 0.0;
    a.spectral_ok_ = false;
    return a;
  }

  static Activation custom(std::string name, std::function<double(double)> s,
                           std::function<double(double)> ds,
                           std::function<double(double)> d2s, double sup_ds,
                           double sup_d2s, bool spectral_ok) {
    Activation a;
    a.kind_ = Kind::Custom;
    a.name_ = std::move(name);
    a.c_s_ = std::move(s);
    a.c_ds_ = std::move(ds);
    a.c_d2s_ = std::move(d2s);
    a.sup_dsigma_ = sup_ds;
    a.sup_d2sigma_ = sup_d2s;
    a.spectral_ok_ = spectral_ok;
    return a;
  }

  ActEval eval(double z) const {
    if (!std::isfinite(z)) throw std::domain_error("activation: non-finite input");
    switch (kind_) {
      case Kind::GeLU: {
        const double phi = norm_pdf(z);
        const double Phi = norm_cdf(z);
        return {z * Phi, Phi + z * phi, (2.0 - z * z) * phi};
      }
      case Kind::QuadGauss: {
        const double u = qb_ * z;
        const double e = std::exp(-u * u);
        const double c = 2.0 * qa_ * qb_ * qb_;
        return {qa_ * (1.0 - e), c * z * e, c * e * (1.0 - 2.0 * u * u)};
      }
      case Kind::ReLU:
        return {z > 0.0 ? z : 0.0, z > 0.0 ? 1.0 : 0.0, 0.0};
      case Kind::Custom:
        return {c_s_(z), c_ds_(z), c_d2s_(z)};
    }
    throw std::logic_error("activation: bad kind");
  }

  double sigma(double z) const { return eval(z).sigma; }
  double dsigma(double z) const { return eval(z).dsigma; }
  double d2sigma(double z) const { return eval(z).d2sigma; }

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  bool spectral_ok() const { return spectral_ok_; }
  double sup_dsigma() const { return sup_dsigma_; }
  double sup_d2sigma() const { return sup_d2sigma_; }

 private:
  Kind kind_ = Kind::GeLU;
  std::string name_;
  double qa_ = 9.0, qb_ = 1.0 / 3.0;
  std::function<double(double)> c_s_, c_ds_, c_d2s_;
  double sup_dsigma_ = 0.0, sup_d2sigma_ = 0.0;
  bool spectral_ok_ = true;
};

struct LossEval {
  double l;      // loss value
  double dl;     // d/dz
  double d2l;    // d^2/dz^2
  double dy_dl;  // d/dy of dl
};

class Loss {
 public:
  enum class Kind { Huber, Square };

  static Loss huber(double M = 1.0) {
    if (!(M > 0.0)) throw ConfigError("huber loss needs M > 0");
    Loss l;
    l.kind_ = Kind::Huber;
    l.m_ = M;
    return l;
  }

  static Loss square() {
    Loss l;
    l.kind_ = Kind::Square;
    return l;
  }

  LossEval eval(double y, double z) const {
    if (!std::isfinite(y) || !std::isfinite(z))
      throw std::domain_error("loss: non-finite input");
    const double r = z - y;
    switch (kind_) {
      case Kind::Huber:
        if (std::abs(r) <= m_) return {0.5 * r * r, r, 1.0, -1.0};
        return {m_ * std::abs(r) - 0.5 * m_ * m_, r > 0.0 ? m_ : -m_, 0.0, 0.0};
      case Kind::Square:
        return {0.5 * r * r, r, 1.0, -1.0};
    }
    throw std::logic_error("loss: bad kind");
  }

  Kind kind() const { return kind_; }
  double huber_m() const { return m_; }
  // Bound constants used by the weight-function range checks.
  double sup_dl() const { return kind_ == Kind::Huber ? m_ : std::numeric_limits<double>::infinity(); }
  double sup_d2l() const { return 1.0; }
  bool requires_bounded_response() const { return kind_ == Kind::Square; }
  std::string name() const {
    return kind_ == Kind::Huber ? "huber" : "square";
  }

 private:
  Kind kind_ = Kind::Huber;
  double m_ = 1.0;
};

// Link y = h(z, eps) with z the k latent preactivations. The gradient in z is
// analytic when supplied, central finite differences (step 1e-6) otherwise.
class Link {
 public:
  using Fn = std::function<double(const double*, double)>;
  using GradFn = std::function<void(const double*, double, double*)>;

  static Link phase_retrieval() {
    Link l;
    l.name_ = "phase_retrieval";
    l.k_ = 1;
    l.h_ = [](const double* z, double) { return z[0] * z[0]; };
    l.grad_ = [](const double* z, double, double* out) { out[0] = 2.0 * z[0]; };
    l.bounded_response_ = false;
    return l;
  }

  static Link custom(std::string name, int k, Fn h, GradFn grad = nullptr,
                     bool bounded_response = false) {
    if (k < 1) throw ConfigError("link: k must be >= 1");
    Link l;
    l.name_ = std::move(name);
    l.k_ = k;
    l.h_ = std::move(h);
    l.grad_ = std::move(grad);
    l.bounded_response_ = bounded_response;
    return l;
  }

  double h(const double* z, double eps) const { return h_(z, eps); }

  void dh_dz(const double* z, double eps, double* out) const {
    if (grad_) {
      grad_(z, eps, out);
      return;
    }
    constexpr double kStep = 1e-6;
    std::vector<double> zp(z, z + k_);
    for (int i = 0; i < k_; ++i) {
      zp[i] = z[i] + kStep;
      const double hp = h_(zp.data(), eps);
      zp[i] = z[i] - kStep;
      const double hm = h_(zp.data(), eps);
      zp[i] = z[i];
      out[i] = (hp - hm) / (2.0 * kStep);
    }
  }

  int k() const { return k_; }
  const std::string& name() const { return name_; }
  bool bounded_response() const { return bounded_response_; }

 private:
  std::string name_;
  int k_ = 1;
  Fn h_;
  GradFn grad_;
  bool bounded_response_ = false;
};

// Rejects the combinations the theory excludes: square loss with unbounded
// responses, and non-C^2 activations outside trainer mode.
void check_loss_link(const Loss& loss, const Link& link);
void check_spectral_activation(const Activation& act);

// Two-layer network; only theta is trained, (a, b) stay fixed.
struct NetworkParams {
  Eigen::MatrixXd theta;  // d x m, column j is neuron j
  Eigen::VectorXd a;      // m
  Eigen::VectorXd b;      // m

  int d() const { return static_cast<int>(theta.rows()); }
  int m() const { return static_cast<int>(theta.cols()); }

  static NetworkParams make(const Eigen::MatrixXd& theta) {
    NetworkParams p;
    p.theta = theta;
    p.a = Eigen::VectorXd::Ones(theta.cols());
    p.b = Eigen::VectorXd::Zero(theta.cols());
    return p;
  }
};

// f(x) = (1/m) sum_j a_j sigma(theta_j^T x + b_j)
double forward(const NetworkParams& params, const Activation& act,
               const Eigen::Ref<const Eigen::VectorXd>& x);

// Network output from precomputed preactivations v = Theta^T x.
double forward_from_preact(const NetworkParams& params, const Activation& act,
                           const Eigen::Ref<const Eigen::VectorXd>& v);

struct RiskGrad {
  double risk;
  Eigen::MatrixXd grad;  // d x m
};

// Empirical risk (1/n) sum_i l(y_i, f(x_i)) and its gradient in theta,
// column j = (1/(n m)) sum_i a_j l'_i sigma'(v_ij + b_j) x_i.
RiskGrad risk_and_grad(const NetworkParams& params, const Activation& act,
                       const Loss& loss, const Eigen::Ref<const Eigen::MatrixXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& y);

double risk_only(const NetworkParams& params, const Activation& act,
                 const Loss& loss, const Eigen::Ref<const Eigen::MatrixXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& y);

// Scalar Hessian weight for block j at preactivations v and response y.
// Width m > 1: l'(y, f(v)) sigma''(v_j + b_j). Width m = 1 combines both
// curvature terms: l'' sigma'^2 + l' sigma'' (exact for a = 1).
double weight_g(const NetworkParams& params, const Activation& act,
                const Loss& loss, int j, const Eigen::Ref<const Eigen::VectorXd>& v,
                double y);

}  // namespace gds
