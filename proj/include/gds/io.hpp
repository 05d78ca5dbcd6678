#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gds/dmft.hpp"

namespace gds {

inline constexpr const char* kVersionTag = "1.0.0";

// Plain key = value run configuration. Lines starting with '#' and blank
// lines are skipped; keys may not repeat. Typed getters fall back to the
// supplied default when the key is absent and throw ConfigError on a value
// that does not parse.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& dflt) const;
  double get_double(const std::string& key, double dflt) const;
  int get_int(const std::string& key, int dflt) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  // comma-separated list of numbers
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& dflt) const;

  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key);
  const std::map<std::string, std::string>& values() const { return values_; }

  // Throws ConfigError naming the offender when a key outside the allowed
  // set is present.
  void require_known(const std::vector<std::string>& allowed) const;

 private:
  std::map<std::string, std::string> values_;
};

// Streaming CSV emitter; numbers are printed with round-trip precision so
// outputs are reproducible bit for bit.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<std::string>& cells);
  void row_values(const std::vector<double>& values);
  void close();
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t columns_;
};

std::string format_double(double v);

// 64-bit FNV-1a over the file bytes, rendered as "fnv1a64:<16 hex digits>".
std::string file_digest(const std::string& path);

struct ManifestOutput {
  std::string path;
  std::string digest;
};

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  int workers = 1;
  bool paper_scale = false;
  std::map<std::string, std::string> config;
  double wall_seconds = 0.0;
  std::vector<ManifestOutput> outputs;
};

void write_manifest(const std::string& path, const RunManifest& manifest);

class WallTimer {
 public:
  WallTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Self-describing JSON container for a kernel table, round-trippable.
void save_kernels(const std::string& path, const DmftKernels& kernels,
                  std::uint64_t seed, int n_paths);
DmftKernels load_kernels(const std::string& path,
                         std::uint64_t* seed = nullptr,
                         int* n_paths = nullptr);

}  // namespace gds
