#pragma once

#include <map>
#include <string>
#include <vector>

#include "dcdp/core.hpp"

namespace dcdp {

/// Flat key = value configuration. '#' starts a comment; whitespace around
/// keys and values is ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Reject keys outside the known schema (typo protection, pre-compute).
  void require_known_keys(const std::vector<std::string>& known) const;

  /// Canonical snapshot text (sorted key = value lines).
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dcdp
