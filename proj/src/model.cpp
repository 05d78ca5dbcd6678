#include "gds/model.hpp"

#include <limits>

namespace gds {

void check_loss_link(const Loss& loss, const Link& link) {
  if (loss.requires_bounded_response() && !link.bounded_response())
    throw ConfigError("square loss requires a bounded-response link; use huber");
}

void check_spectral_activation(const Activation& act) {
  if (!act.spectral_ok())
    throw ConfigError("activation '" + act.name() +
                      "' lacks the curvature regularity needed for spectral predictions");
}

double forward_from_preact(const NetworkParams& params, const Activation& act,
                           const Eigen::Ref<const Eigen::VectorXd>& v) {
  const int m = params.m();
  double acc = 0.0;
  for (int j = 0; j < m; ++j)
    acc += params.a[j] * act.sigma(v[j] + params.b[j]);
  return acc / static_cast<double>(m);
}

double forward(const NetworkParams& params, const Activation& act,
               const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd v = params.theta.transpose() * x;
  return forward_from_preact(params, act, v);
}

RiskGrad risk_and_grad(const NetworkParams& params, const Activation& act,
                       const Loss& loss, const Eigen::Ref<const Eigen::MatrixXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& y) {
  const int n = static_cast<int>(x.rows());
  const int m = params.m();
  if (x.cols() != params.theta.rows())
    throw ConfigError("risk_and_grad: data dimension mismatch");
  if (y.size() != n) throw ConfigError("risk_and_grad: label count mismatch");
  if (n == 0) throw ConfigError("risk_and_grad: empty sample");

  // V(i, j) = theta_j . x_i
  Eigen::MatrixXd v = x * params.theta;
  Eigen::MatrixXd s(n, m), ds(n, m);
  for (int j = 0; j < m; ++j) {
    const double bj = params.b[j];
    for (int i = 0; i < n; ++i) {
      const ActEval e = act.eval(v(i, j) + bj);
      s(i, j) = e.sigma;
      ds(i, j) = e.dsigma;
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  Eigen::VectorXd f = inv_m * (s * params.a);

  double risk = 0.0;
  Eigen::VectorXd dl(n);
  for (int i = 0; i < n; ++i) {
    const LossEval le = loss.eval(y[i], f[i]);
    risk += le.l;
    dl[i] = le.dl;
  }
  risk /= static_cast<double>(n);

  // G(i, j) = a_j l'_i sigma'(v_ij + b_j) / (n m); grad = X^T G
  Eigen::MatrixXd g = ds;
  for (int j = 0; j < m; ++j)
    g.col(j) = (params.a[j] * inv_m / static_cast<double>(n)) *
               g.col(j).cwiseProduct(dl);
  RiskGrad out;
  out.risk = risk;
  out.grad = x.transpose() * g;
  return out;
}

double risk_only(const NetworkParams& params, const Activation& act,
                 const Loss& loss, const Eigen::Ref<const Eigen::MatrixXd>& x,
                 const Eigen::Ref<const Eigen::VectorXd>& y) {
  const int n = static_cast<int>(x.rows());
  const int m = params.m();
  if (x.cols() != params.theta.rows())
    throw ConfigError("risk_only: data dimension mismatch");
  if (n == 0) throw ConfigError("risk_only: empty sample");
  Eigen::MatrixXd v = x * params.theta;
  const double inv_m = 1.0 / static_cast<double>(m);
  double risk = 0.0;
  for (int i = 0; i < n; ++i) {
    double f = 0.0;
    for (int j = 0; j < m; ++j)
      f += params.a[j] * act.sigma(v(i, j) + params.b[j]);
    risk += loss.eval(y[i], f * inv_m).l;
  }
  return risk / static_cast<double>(n);
}

double weight_g(const NetworkParams& params, const Activation& act,
                const Loss& loss, int j, const Eigen::Ref<const Eigen::VectorXd>& v,
                double y) {
  const int m = params.m();
  if (j < 0 || j >= m) throw std::out_of_range("weight_g: neuron index out of range");
  if (v.size() != m) throw ConfigError("weight_g: preactivation size mismatch");
  const double f = forward_from_preact(params, act, v);
  const LossEval le = loss.eval(y, f);
  if (m > 1) return le.dl * act.d2sigma(v[j] + params.b[j]);
  const ActEval ae = act.eval(v[0] + params.b[0]);
  return le.d2l * ae.dsigma * ae.dsigma + le.dl * ae.d2sigma;
}

}  // namespace gds
