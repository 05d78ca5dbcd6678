#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "gds/model.hpp"
#include "gds/rng.hpp"

using namespace gds;

namespace {

double fd1(const Activation& act, double z, double h = 1e-5) {
  return (act.sigma(z + h) - act.sigma(z - h)) / (2.0 * h);
}

double fd2(const Activation& act, double z, double h = 1e-5) {
  return (act.dsigma(z + h) - act.dsigma(z - h)) / (2.0 * h);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("gelu closed-form values") {
  const Activation act = Activation::gelu();
  const ActEval at0 = act.eval(0.0);
  CHECK(at0.sigma == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(at0.dsigma == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(at0.d2sigma == doctest::Approx(0.7978845608028654).epsilon(1e-14));
  const ActEval at1 = act.eval(1.0);
  CHECK(at1.sigma == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(at1.dsigma == doctest::Approx(1.0833154705876863).epsilon(1e-14));
  CHECK(at1.d2sigma == doctest::Approx(0.24197072451914337).epsilon(1e-14));
}

TEST_CASE("saturating bump closed-form values") {
  const Activation act = Activation::quad_gauss();
  const ActEval at0 = act.eval(0.0);
  CHECK(at0.sigma == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(at0.dsigma == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(at0.d2sigma == doctest::Approx(2.0).epsilon(1e-14));
  // saturates to the plateau value for large inputs, symmetrically
  CHECK(act.sigma(20.0) == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(act.sigma(-2.3) == doctest::Approx(act.sigma(2.3)).epsilon(1e-14));
  CHECK(act.dsigma(-2.3) == doctest::Approx(-act.dsigma(2.3)).epsilon(1e-14));
}

TEST_CASE("derivatives match finite differences") {
  for (const Activation& act :
       {Activation::gelu(), Activation::quad_gauss()}) {
    for (double z = -4.0; z <= 4.0; z += 0.23) {
      const ActEval e = act.eval(z);
      CHECK(e.dsigma == doctest::Approx(fd1(act, z)).epsilon(1e-6));
      CHECK(e.d2sigma == doctest::Approx(fd2(act, z)).epsilon(1e-6));
    }
  }
}

TEST_CASE("derivative bounds hold on a dense grid") {
  for (const Activation& act :
       {Activation::gelu(), Activation::quad_gauss()}) {
    double max1 = 0.0, max2 = 0.0;
    for (double z = -12.0; z <= 12.0; z += 0.001) {
      const ActEval e = act.eval(z);
      max1 = std::max(max1, std::abs(e.dsigma));
      max2 = std::max(max2, std::abs(e.d2sigma));
    }
    CHECK(max1 <= act.sup_dsigma() + 1e-9);
    CHECK(max2 <= act.sup_d2sigma() + 1e-9);
    // the bounds are attained, not just padded
    CHECK(max1 >= 0.98 * act.sup_dsigma());
    CHECK(max2 >= 0.98 * act.sup_d2sigma());
  }
}

TEST_CASE("relu is trainer-only") {
  const Activation act = Activation::relu();
  CHECK(act.eval(2.0).sigma == 2.0);
  CHECK(act.eval(-2.0).sigma == 0.0);
  CHECK(act.eval(2.0).dsigma == 1.0);
  CHECK(act.eval(2.0).d2sigma == 0.0);
  CHECK_FALSE(act.spectral_ok());
  CHECK_THROWS_AS(check_spectral_activation(act), ConfigError);
  CHECK_NOTHROW(check_spectral_activation(Activation::gelu()));
}

TEST_CASE("non-finite inputs rejected") {
  CHECK_THROWS_AS(Activation::gelu().eval(std::nan("")), std::domain_error);
  CHECK_THROWS_AS(Loss::huber(1.0).eval(0.0, std::nan("")),
                  std::domain_error);
}

TEST_CASE("robust loss values in both regimes") {
  const Loss loss = Loss::huber(1.0);
  {
    const LossEval e = loss.eval(0.0, 2.0);  // linear regime, r = 2
    CHECK(e.l == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(e.dl == 1.0);
    CHECK(e.d2l == 0.0);
    CHECK(e.dy_dl == 0.0);
  }
  {
    const LossEval e = loss.eval(0.3, 0.5);  // quadratic regime, r = 0.2
    CHECK(e.l == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(e.dl == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(e.d2l == 1.0);
    CHECK(e.dy_dl == -1.0);
  }
  CHECK_THROWS_AS(Loss::huber(-1.0), ConfigError);
}

TEST_CASE("square loss values") {
  const LossEval e = Loss::square().eval(1.0, 0.0);
  CHECK(e.l == 0.5);
  CHECK(e.dl == -1.0);
  CHECK(e.d2l == 1.0);
  CHECK(e.dy_dl == -1.0);
}

TEST_CASE("loss derivative finite differences") {
  const double h = 1e-5;
  for (const Loss& loss : {Loss::huber(1.0), Loss::square()}) {
    for (double y : {-1.7, 0.0, 0.9}) {
      for (double z = -2.0; z <= 2.0; z += 0.31) {
        if (std::abs(std::abs(z - y) - 1.0) < 0.01) continue;  // kink
        const LossEval e = loss.eval(y, z);
        const double dz = (loss.eval(y, z + h).l - loss.eval(y, z - h).l) / (2 * h);
        const double dzz =
            (loss.eval(y, z + h).dl - loss.eval(y, z - h).dl) / (2 * h);
        const double dy =
            (loss.eval(y + h, z).dl - loss.eval(y - h, z).dl) / (2 * h);
        CHECK(std::abs(e.dl - dz) < 1e-8);
        CHECK(std::abs(e.d2l - dzz) < 1e-8);
        CHECK(std::abs(e.dy_dl - dy) < 1e-8);
      }
    }
  }
}

TEST_CASE("loss link compatibility") {
  CHECK_NOTHROW(check_loss_link(Loss::huber(1.0), Link::phase_retrieval()));
  CHECK_THROWS_AS(check_loss_link(Loss::square(), Link::phase_retrieval()),
                  ConfigError);
  const Link bounded = Link::custom(
      "clipped", 1, [](const double* z, double) { return std::tanh(z[0]); },
      nullptr, true);
  CHECK_NOTHROW(check_loss_link(Loss::square(), bounded));
}

TEST_CASE("link gradient falls back to finite differences") {
  const Link pr = Link::phase_retrieval();
  double z = 1.3, g = 0.0;
  pr.dh_dz(&z, 0.0, &g);
  CHECK(g == doctest::Approx(2.6).epsilon(1e-12));
  const Link no_grad = Link::custom(
      "cubic", 1, [](const double* z, double) { return z[0] * z[0] * z[0]; });
  no_grad.dh_dz(&z, 0.0, &g);
  CHECK(g == doctest::Approx(3 * 1.3 * 1.3).epsilon(1e-5));
}

TEST_CASE("forward matches the explicit sum") {
  const Activation act = Activation::gelu();
  Eigen::MatrixXd theta(3, 2);
  theta << 0.3, -0.1, 0.7, 0.4, -0.2, 0.9;
  NetworkParams p = NetworkParams::make(theta);
  p.a << 1.5, -0.5;
  p.b << 0.1, -0.3;
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  double expect = 0.0;
  for (int j = 0; j < 2; ++j)
    expect += p.a[j] * act.sigma(theta.col(j).dot(x) + p.b[j]);
  expect /= 2.0;
  CHECK(forward(p, act, x) == doctest::Approx(expect).epsilon(1e-14));
  const Eigen::VectorXd v = theta.transpose() * x;
  CHECK(forward_from_preact(p, act, v) ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("forward invariant under neuron permutation") {
  RngStream rng(5, make_stream(StreamDomain::kMisc, 7));
  Eigen::MatrixXd theta(4, 3);
  for (int i = 0; i < theta.size(); ++i) theta.data()[i] = rng.normal();
  NetworkParams p = NetworkParams::make(theta);
  p.a << 0.5, -1.0, 2.0;
  p.b << 0.2, 0.0, -0.4;
  NetworkParams q = p;
  q.theta.col(0) = p.theta.col(2);
  q.theta.col(2) = p.theta.col(0);
  std::swap(q.a[0], q.a[2]);
  std::swap(q.b[0], q.b[2]);
  Eigen::VectorXd x(4);
  for (int i = 0; i < 4; ++i) x[i] = rng.normal();
  CHECK(forward(p, Activation::gelu(), x) ==
        doctest::Approx(forward(q, Activation::gelu(), x)).epsilon(1e-14));
}

TEST_CASE("risk gradient against finite differences") {
  RngStream rng(9, make_stream(StreamDomain::kMisc, 8));
  const int d = 6, n = 20, m = 2;
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (int i = 0; i < n; ++i) y[i] = rng.normal();
  Eigen::MatrixXd theta(d, m);
  for (int i = 0; i < theta.size(); ++i) theta.data()[i] = 0.4 * rng.normal();
  NetworkParams p = NetworkParams::make(theta);
  const Activation act = Activation::gelu();
  const Loss loss = Loss::huber(1.0);
  const RiskGrad rg = risk_and_grad(p, act, loss, x, y);
  CHECK(rg.risk == doctest::Approx(risk_only(p, act, loss, x, y)).epsilon(1e-14));
  const double h = 1e-6;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < d; ++i) {
      NetworkParams q = p;
      q.theta(i, j) += h;
      const double up = risk_only(q, act, loss, x, y);
      q.theta(i, j) -= 2 * h;
      const double dn = risk_only(q, act, loss, x, y);
      const double fd = (up - dn) / (2 * h);
      CHECK(std::abs(rg.grad(i, j) - fd) <
            1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("curvature weight closed forms") {
  const Activation act = Activation::gelu();
  const Loss loss = Loss::huber(1.0);
  // single neuron at the origin: l'' sigma'(0)^2 + l' sigma''(0) with l'=0
  NetworkParams p1 = NetworkParams::make(Eigen::MatrixXd::Zero(4, 1));
  Eigen::VectorXd v1(1);
  v1 << 0.0;
  CHECK(weight_g(p1, act, loss, 0, v1, 0.0) ==
        doctest::Approx(0.25).epsilon(1e-14));

  // width 2: first-order term only, l'(y, f) sigma''(v_j)
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(4, 2);
  NetworkParams p2 = NetworkParams::make(theta);
  Eigen::VectorXd v2(2);
  v2 << 0.7, -0.4;
  const double f = 0.5 * (act.sigma(0.7) + act.sigma(-0.4));
  const double expect = loss.eval(2.0, f).dl * act.d2sigma(0.7);
  CHECK(weight_g(p2, act, loss, 0, v2, 2.0) ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(weight_g(p2, act, loss, 5, v2, 2.0), std::out_of_range);
}

}  // TEST_SUITE
