#include "gds/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "gds/errors.hpp"

namespace gds {

namespace {

void require_orthonormal(const Eigen::MatrixXd& u, double tol, const char* what) {
  Eigen::MatrixXd gram = u.transpose() * u;
  gram -= Eigen::MatrixXd::Identity(u.cols(), u.cols());
  if (gram.cwiseAbs().maxCoeff() > tol)
    throw ConfigError(std::string(what) + ": columns not orthonormal");
}

}  // namespace

void TargetSpec::validate() const {
  if (k < 1) throw ConfigError("target: k must be >= 1");
  if (r < 1 || r > k) throw ConfigError("target: need 1 <= r <= k");
  if (theta_star.cols() != k) throw ConfigError("target: theta_star must have k columns");
  if (theta_star.rows() < k) throw ConfigError("target: need k <= d");
  if (u_hard.rows() != k || u_hard.cols() != r)
    throw ConfigError("target: u_hard must be k x r");
  if (link.k() != k) throw ConfigError("target: link latent dimension mismatch");
  require_orthonormal(theta_star, 1e-10, "target.theta_star");
  require_orthonormal(u_hard, 1e-10, "target.u_hard");
}

Eigen::MatrixXd gaussian_orthonormal_frame(int d, int k, RngStream& rng) {
  if (k > d) throw ConfigError("frame: k must be <= d");
  Eigen::MatrixXd g(d, k);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < k; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
  Eigen::MatrixXd rfac =
      qr.matrixQR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (rfac(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

TargetSpec sample_target(int d, int k, const Link& link,
                         const Eigen::MatrixXd& u_hard, std::uint64_t seed) {
  RngStream rng(seed, make_stream(StreamDomain::kTarget, 0, 0));
  TargetSpec t;
  t.k = k;
  t.r = static_cast<int>(u_hard.cols());
  t.theta_star = gaussian_orthonormal_frame(d, k, rng);
  t.u_hard = u_hard;
  t.link = link;
  t.validate();
  return t;
}

TargetSpec sample_target(int d, const Link& link, std::uint64_t seed) {
  return sample_target(d, 1, link, Eigen::MatrixXd::Ones(1, 1), seed);
}

Dataset sample_dataset(int n, const TargetSpec& target, std::uint64_t seed) {
  if (n < 1) throw ConfigError("dataset: n must be >= 1");
  target.validate();
  const int d = target.d();
  const int k = target.k;

  Dataset data;
  data.target = target;
  data.seed = seed;
  data.x.resize(n, d);
  {
    RngStream rng(seed, make_stream(StreamDomain::kDataset, 0, 0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) data.x(i, j) = rng.normal();
  }
  data.eps.resize(n);
  {
    RngStream rng(seed, make_stream(StreamDomain::kDataset, 1, 0));
    for (int i = 0; i < n; ++i) data.eps[i] = rng.normal();
  }
  Eigen::MatrixXd z = data.x * target.theta_star;  // n x k
  data.y.resize(n);
  Eigen::VectorXd zi(k);
  for (int i = 0; i < n; ++i) {
    zi = z.row(i);
    data.y[i] = target.link.h(zi.data(), data.eps[i]);
  }
  return data;
}

Eigen::MatrixXd orthonormal_complement(const Eigen::MatrixXd& u) {
  const int k = static_cast<int>(u.rows());
  const int r = static_cast<int>(u.cols());
  if (r >= k) return Eigen::MatrixXd(k, 0);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
  Eigen::MatrixXd qfull = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  return qfull.rightCols(k - r);
}

std::vector<TestFunction> default_test_bank(int n_perp) {
  auto leg = [](int l, double u) {
    const double t = 2.0 * u - 1.0;
    switch (l) {
      case 0: return 1.0;
      case 1: return 1.7320508075688772 * t;                      // sqrt(3) P1
      case 2: return 2.23606797749979 * 0.5 * (3.0 * t * t - 1.0);  // sqrt(5) P2
      case 3: return 2.6457513110645907 * 0.5 * (5.0 * t * t * t - 3.0 * t);
      default: return 0.0;
    }
  };
  auto herm = [](int l, double z) {
    switch (l) {
      case 0: return 1.0;
      case 1: return z;
      case 2: return (z * z - 1.0) * 0.7071067811865475;
      case 3: return (z * z * z - 3.0 * z) * 0.4082482904638631;
      default: return 0.0;
    }
  };
  std::vector<TestFunction> bank;
  std::vector<int> deg(n_perp + 2, 0);  // [y, perp..., xi]
  while (true) {
    std::string name = "L" + std::to_string(deg[0]);
    for (int i = 0; i < n_perp; ++i) name += "_c" + std::to_string(deg[1 + i]);
    name += "_x" + std::to_string(deg[n_perp + 1]);
    std::vector<int> dcopy = deg;
    bank.push_back({name, [dcopy, n_perp, leg, herm](double u_y,
                                                     const Eigen::VectorXd& c,
                                                     double xi) {
                      double v = leg(dcopy[0], u_y);
                      for (int i = 0; i < n_perp; ++i) v *= herm(dcopy[1 + i], c[i]);
                      v *= herm(dcopy[n_perp + 1], xi);
                      return v;
                    }});
    int pos = static_cast<int>(deg.size()) - 1;
    while (pos >= 0 && deg[pos] == 3) deg[pos--] = 0;
    if (pos < 0) break;
    ++deg[pos];
  }
  return bank;
}

double hard_subspace_check(const Link& link, const Eigen::MatrixXd& u_candidate,
                           int mc, std::uint64_t seed,
                           const std::vector<TestFunction>* bank) {
  if (mc < 10000) throw ConfigError("hard_subspace_check: mc must be >= 1e4");
  const int k = link.k();
  if (u_candidate.rows() != k)
    throw ConfigError("hard_subspace_check: candidate rows must equal link k");
  require_orthonormal(u_candidate, 1e-10, "hard_subspace_check.u_candidate");
  const int rp = static_cast<int>(u_candidate.cols());
  Eigen::MatrixXd uperp = orthonormal_complement(u_candidate);
  const int n_perp = static_cast<int>(uperp.cols());

  std::vector<TestFunction> owned;
  if (bank == nullptr) {
    owned = default_test_bank(n_perp);
    bank = &owned;
  }

  Eigen::MatrixXd z(mc, k);
  Eigen::VectorXd y(mc), xi(mc);
  {
    RngStream rng(seed, make_stream(StreamDomain::kTestBank, 0, 0));
    for (int i = 0; i < mc; ++i)
      for (int j = 0; j < k; ++j) z(i, j) = rng.normal();
  }
  {
    RngStream rng(seed, make_stream(StreamDomain::kTestBank, 1, 0));
    Eigen::VectorXd zi(k);
    for (int i = 0; i < mc; ++i) {
      const double eps = rng.normal();
      zi = z.row(i);
      y[i] = link.h(zi.data(), eps);
    }
  }
  {
    RngStream rng(seed, make_stream(StreamDomain::kTestBank, 2, 0));
    for (int i = 0; i < mc; ++i) xi[i] = rng.normal();
  }

  // Rank transform of y to (0, 1).
  std::vector<int> order(mc);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return y[a] < y[b]; });
  Eigen::VectorXd u_y(mc);
  for (int pos = 0; pos < mc; ++pos)
    u_y[order[pos]] = (pos + 0.5) / static_cast<double>(mc);

  Eigen::MatrixXd zu = z * u_candidate;      // mc x rp, the projected signal
  Eigen::MatrixXd zp = z * uperp;            // mc x n_perp

  double worst = 0.0;
  Eigen::VectorXd acc(rp), crow(n_perp);
  for (const auto& t : *bank) {
    acc.setZero();
    for (int i = 0; i < mc; ++i) {
      crow = zp.row(i);
      acc += t.f(u_y[i], crow, xi[i]) * zu.row(i).transpose();
    }
    worst = std::max(worst, (acc / static_cast<double>(mc)).norm());
  }
  return worst;
}

namespace {

constexpr char kMagic[8] = {'G', 'D', 'S', 'D', 'A', 'T', 'A', '1'};

void put_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t get_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_dataset: cannot open " + path);
  out.write(kMagic, 8);
  const int n = data.n(), d = data.d();
  const int k = data.target.k, r = data.target.r;
  put_u64(out, static_cast<std::uint64_t>(n));
  put_u64(out, static_cast<std::uint64_t>(d));
  put_u64(out, static_cast<std::uint64_t>(k));
  put_u64(out, static_cast<std::uint64_t>(r));
  put_u64(out, data.seed);
  const std::string& tag = data.target.link.name();
  const std::uint32_t len = static_cast<std::uint32_t>(tag.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(tag.data(), len);
  std::vector<double> row(d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) row[j] = data.x(i, j);
    out.write(reinterpret_cast<const char*>(row.data()), sizeof(double) * d);
  }
  out.write(reinterpret_cast<const char*>(data.y.data()), sizeof(double) * n);
  out.write(reinterpret_cast<const char*>(data.eps.data()), sizeof(double) * n);
  out.write(reinterpret_cast<const char*>(data.target.theta_star.data()),
            sizeof(double) * d * k);
  out.write(reinterpret_cast<const char*>(data.target.u_hard.data()),
            sizeof(double) * k * r);
  if (!out) throw ConfigError("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_dataset: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw ConfigError("load_dataset: bad magic in " + path);
  const auto n = static_cast<int>(get_u64(in));
  const auto d = static_cast<int>(get_u64(in));
  const auto k = static_cast<int>(get_u64(in));
  const auto r = static_cast<int>(get_u64(in));
  const std::uint64_t seed = get_u64(in);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string tag(len, '\0');
  in.read(tag.data(), len);
  if (tag != "phase_retrieval")
    throw ConfigError("load_dataset: unknown link tag '" + tag + "'");

  Dataset data;
  data.seed = seed;
  data.x.resize(n, d);
  std::vector<double> row(d);
  for (int i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * d);
    for (int j = 0; j < d; ++j) data.x(i, j) = row[j];
  }
  data.y.resize(n);
  in.read(reinterpret_cast<char*>(data.y.data()), sizeof(double) * n);
  data.eps.resize(n);
  in.read(reinterpret_cast<char*>(data.eps.data()), sizeof(double) * n);
  data.target.k = k;
  data.target.r = r;
  data.target.link = Link::phase_retrieval();
  data.target.theta_star.resize(d, k);
  in.read(reinterpret_cast<char*>(data.target.theta_star.data()),
          sizeof(double) * d * k);
  data.target.u_hard.resize(k, r);
  in.read(reinterpret_cast<char*>(data.target.u_hard.data()),
          sizeof(double) * k * r);
  if (!in) throw ConfigError("load_dataset: truncated file " + path);
  return data;
}

}  // namespace gds
