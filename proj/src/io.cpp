#include "gds/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "gds/errors.hpp"
#include "json.hpp"

namespace gds {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, const char* what) {
  if (!rows.is_array())
    throw ConfigError(std::string("kernel container: ") + what +
                      " is not an array");
  const int nr = static_cast<int>(rows.size());
  int nc = 0;
  if (nr > 0) {
    if (!rows[0].is_array())
      throw ConfigError(std::string("kernel container: ") + what +
                        " rows malformed");
    nc = static_cast<int>(rows[0].size());
  }
  Eigen::MatrixXd m(nr, nc);
  for (int i = 0; i < nr; ++i) {
    if (static_cast<int>(rows[i].size()) != nc)
      throw ConfigError(std::string("kernel container: ") + what +
                        " ragged rows");
    for (int j = 0; j < nc; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

}  // namespace

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: empty key at line " + std::to_string(lineno));
    if (cfg.values_.count(key))
      throw ConfigError("config: duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KvConfig::get_str(const std::string& key,
                              const std::string& dflt) const {
  auto it = values_.find(key);
  return it == values_.end() ? dflt : it->second;
}

double KvConfig::get_double(const std::string& key, double dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size())
      throw ConfigError("config: trailing characters in '" + key + "'");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not a number");
  }
}

int KvConfig::get_int(const std::string& key, int dflt) const {
  const double v = get_double(key, static_cast<double>(dflt));
  const int r = static_cast<int>(v);
  if (static_cast<double>(r) != v)
    throw ConfigError("config: key '" + key + "' is not an integer");
  return r;
}

std::uint64_t KvConfig::get_u64(const std::string& key,
                                std::uint64_t dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size())
      throw ConfigError("config: trailing characters in '" + key + "'");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' is not an unsigned integer");
  }
}

bool KvConfig::get_bool(const std::string& key, bool dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: key '" + key + "' is not a boolean");
}

std::vector<double> KvConfig::get_list(const std::string& key,
                                       const std::vector<double>& dflt) const {
  auto it = values_.find(key);
  if (it == values_.end()) return dflt;
  std::vector<double> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    if (t.empty())
      throw ConfigError("config: empty element in list '" + key + "'");
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(t, &pos));
      if (pos != t.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("config: list '" + key + "' has a non-numeric element");
    }
  }
  if (out.empty())
    throw ConfigError("config: list '" + key + "' is empty");
  return out;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

void KvConfig::erase(const std::string& key) { values_.erase(key); }

void KvConfig::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : values_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("config: unknown key '" + key + "'");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header)
    : path_(path), out_(path), columns_(header.size()) {
  if (!out_) throw ConfigError("csv: cannot open " + path + " for writing");
  row(header);
}

CsvWriter::~CsvWriter() { close(); }

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_)
    throw ConfigError("csv: row width mismatch in " + path_);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void CsvWriter::row_values(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  row(cells);
}

void CsvWriter::close() {
  if (out_.is_open()) {
    out_.flush();
    out_.close();
  }
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("digest: cannot open " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string("fnv1a64:") + hex;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  json j;
  j["version"] = kVersionTag;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["workers"] = manifest.workers;
  j["paper_scale"] = manifest.paper_scale;
  j["config"] = manifest.config;
  j["wall_seconds"] = manifest.wall_seconds;
  json outs = json::array();
  for (const auto& o : manifest.outputs)
    outs.push_back({{"path", o.path}, {"digest", o.digest}});
  j["outputs"] = std::move(outs);
  std::ofstream out(path);
  if (!out) throw ConfigError("manifest: cannot open " + path);
  out << j.dump(2) << '\n';
}

void save_kernels(const std::string& path, const DmftKernels& kernels,
                  std::uint64_t seed, int n_paths) {
  json j;
  j["kind"] = "dmft_kernels";
  j["T"] = kernels.T;
  j["m"] = kernels.m;
  j["k"] = kernels.k;
  j["delta"] = kernels.delta;
  j["eta"] = kernels.eta;
  j["seed"] = seed;
  j["n_paths"] = n_paths;
  j["c_theta"] = matrix_to_json(kernels.c_theta);
  j["c_theta_star"] = matrix_to_json(kernels.c_theta_star);
  j["c_ell"] = matrix_to_json(kernels.c_ell);
  j["r_theta"] = matrix_to_json(kernels.r_theta);
  j["r_ell"] = matrix_to_json(kernels.r_ell);
  j["r_ell_star"] = matrix_to_json(kernels.r_ell_star);
  std::ofstream out(path);
  if (!out) throw ConfigError("kernel container: cannot open " + path);
  out << j.dump() << '\n';
}

DmftKernels load_kernels(const std::string& path, std::uint64_t* seed,
                         int* n_paths) {
  std::ifstream in(path);
  if (!in) throw ConfigError("kernel container: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("kernel container: bad JSON: ") + e.what());
  }
  if (j.value("kind", std::string()) != "dmft_kernels")
    throw ConfigError("kernel container: wrong kind tag");
  DmftKernels k;
  k.T = j.at("T").get<int>();
  k.m = j.at("m").get<int>();
  k.k = j.at("k").get<int>();
  k.delta = j.at("delta").get<double>();
  k.eta = j.at("eta").get<double>();
  if (seed) *seed = j.value("seed", 0ull);
  if (n_paths) *n_paths = j.value("n_paths", 0);
  k.c_theta = matrix_from_json(j.at("c_theta"), "c_theta");
  k.c_theta_star = matrix_from_json(j.at("c_theta_star"), "c_theta_star");
  k.c_ell = matrix_from_json(j.at("c_ell"), "c_ell");
  k.r_theta = matrix_from_json(j.at("r_theta"), "r_theta");
  k.r_ell = matrix_from_json(j.at("r_ell"), "r_ell");
  k.r_ell_star = matrix_from_json(j.at("r_ell_star"), "r_ell_star");
  const int dim_t = (k.T + 1) * k.m;
  if (k.c_theta.rows() != dim_t || k.c_theta.cols() != dim_t ||
      k.c_theta_star.rows() != dim_t || k.c_theta_star.cols() != k.k)
    throw ConfigError("kernel container: dimension mismatch");
  return k;
}

}  // namespace gds
