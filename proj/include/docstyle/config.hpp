#pragma once
// TOML-style experiment configuration.
//
//   # comment
//   out = "runs/desk"
//   seeds = [1, 2, 3]
//   [train]
//   learning_rate = 0.01
//
// Keys are addressed as "section.key". Values are strings (quoted), numbers,
// booleans or flat arrays of those.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace docstyle {

struct ConfigValue {
  using Scalar = std::variant<std::string, double, bool>;
  std::variant<Scalar, std::vector<Scalar>> value;
  std::size_t line = 0;
};

class ConfigDoc {
 public:
  static ConfigDoc parse(const std::string& text, const std::string& origin = "<config>");
  static ConfigDoc load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key) const;
  double get_number(const std::string& key) const;
  std::int64_t get_integer(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;
  std::vector<double> get_numbers(const std::string& key) const;

  std::vector<std::string> keys() const;
  // Throws ParseError naming the first key outside `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const;
  // FNV-1a over the source text.
  std::uint64_t hash() const { return hash_; }
  const std::string& origin() const { return origin_; }

 private:
  const ConfigValue& at(const std::string& key) const;
  std::string where(const std::string& key) const;

  std::map<std::string, ConfigValue> values_;
  std::string origin_;
  std::uint64_t hash_ = 0;
};

std::uint64_t fnv1a(const std::string& text);

}  // namespace docstyle
