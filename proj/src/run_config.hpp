#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dataset.hpp"
#include "eval.hpp"
#include "protocol.hpp"

namespace fussl {

// Flat `key = value` run configuration. Unknown keys are rejected; dumping
// and re-parsing reproduces every value bit-exactly (doubles print with 17
// significant digits).
class RunConfig {
 public:
  RunConfig();  // all defaults, seed unset

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  bool has(const std::string& key) const;

  // Parses `key = value` lines; '#' starts a comment, blank lines ignored.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin);

  // Sorted `key = value` lines, one per key.
  std::string dump() const;

  // Throws config_error when required keys (seed) are missing or malformed.
  void validate() const;

  // Typed views.
  std::uint64_t seed() const;
  std::string out_dir() const;
  std::string dataset_path() const;
  double probe_test_fraction() const;
  std::size_t probe_epochs() const;
  double probe_lr() const;
  std::size_t knn_k() const;

  // Materialized protocol configuration for a dataset of dimension `dim`.
  ProtocolConfig protocol(std::size_t input_dim) const;

  // Synthetic-data generation parameters (gen.* keys).
  Dataset generate(std::uint64_t seed_override) const;
  Dataset generate() const { return generate(seed()); }

 private:
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> dims(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace fussl
