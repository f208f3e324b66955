#include "docstyle/config.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "docstyle/binio.hpp"
#include "docstyle/error.hpp"

namespace docstyle {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') return false;
  }
  return true;
}

class LineParser {
 public:
  LineParser(const std::string& text, std::string where) : s_(text), where_(std::move(where)) {}

  ConfigValue::Scalar scalar() {
    skip();
    if (pos_ >= s_.size()) fail("missing value");
    if (s_[pos_] == '"') return string();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' &&
           !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    const std::string tok = s_.substr(start, pos_ - start);
    if (tok == "true") return true;
    if (tok == "false") return false;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || *end != '\0' || !std::isfinite(v)) fail("bad value '" + tok + "'");
    return v;
  }

  ConfigValue value() {
    skip();
    ConfigValue out;
    if (pos_ < s_.size() && s_[pos_] == '[') {
      ++pos_;
      std::vector<ConfigValue::Scalar> items;
      skip();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
      } else {
        for (;;) {
          items.push_back(scalar());
          skip();
          if (pos_ < s_.size() && s_[pos_] == ',') {
            ++pos_;
            continue;
          }
          if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            break;
          }
          fail("expected ',' or ']' in array");
        }
      }
      out.value = std::move(items);
    } else {
      out.value = scalar();
    }
    skip();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("trailing characters after value");
    return out;
  }

 private:
  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
        const char e = s_[++pos_];
        out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
      } else {
        out.push_back(s_[pos_]);
      }
      ++pos_;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(where_ + ": " + what); }

  const std::string& s_;
  std::string where_;
  std::size_t pos_ = 0;
};

std::string type_name(const ConfigValue::Scalar& s) {
  if (std::holds_alternative<std::string>(s)) return "string";
  if (std::holds_alternative<double>(s)) return "number";
  return "boolean";
}

}  // namespace

ConfigDoc ConfigDoc::parse(const std::string& text, const std::string& origin) {
  ConfigDoc doc;
  doc.origin_ = origin;
  doc.hash_ = fnv1a(text);
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      const auto close = line.find(']');
      if (close == std::string::npos) throw ParseError(where + ": unterminated section header");
      const std::string rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest[0] != '#') throw ParseError(where + ": trailing characters after section");
      section = trim(line.substr(1, close - 1));
      if (!valid_key(section)) throw ParseError(where + ": bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ParseError(where + ": bad key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    const std::string rhs = line.substr(eq + 1);
    ConfigValue v = LineParser(rhs, where).value();
    v.line = line_no;
    if (!doc.values_.emplace(full, std::move(v)).second) {
      throw ParseError(where + ": duplicate key '" + full + "'");
    }
  }
  return doc;
}

ConfigDoc ConfigDoc::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

const ConfigValue& ConfigDoc::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParseError(origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string ConfigDoc::where(const std::string& key) const {
  return origin_ + ":" + std::to_string(at(key).line) + ": '" + key + "'";
}

namespace {

const ConfigValue::Scalar& as_scalar(const ConfigValue& v, const std::string& where) {
  if (const auto* s = std::get_if<ConfigValue::Scalar>(&v.value)) return *s;
  throw ParseError(where + " must be a single value, not an array");
}

}  // namespace

std::string ConfigDoc::get_string(const std::string& key) const {
  const auto& s = as_scalar(at(key), where(key));
  if (const auto* v = std::get_if<std::string>(&s)) return *v;
  throw ParseError(where(key) + " must be a string, got a " + type_name(s));
}

double ConfigDoc::get_number(const std::string& key) const {
  const auto& s = as_scalar(at(key), where(key));
  if (const auto* v = std::get_if<double>(&s)) return *v;
  throw ParseError(where(key) + " must be a number, got a " + type_name(s));
}

std::int64_t ConfigDoc::get_integer(const std::string& key) const {
  const double v = get_number(key);
  if (v != std::floor(v) || std::abs(v) > 9.0e15) throw ParseError(where(key) + " must be an integer");
  return static_cast<std::int64_t>(v);
}

bool ConfigDoc::get_bool(const std::string& key) const {
  const auto& s = as_scalar(at(key), where(key));
  if (const auto* v = std::get_if<bool>(&s)) return *v;
  throw ParseError(where(key) + " must be true or false, got a " + type_name(s));
}

std::vector<std::string> ConfigDoc::get_strings(const std::string& key) const {
  const auto& v = at(key);
  std::vector<std::string> out;
  if (const auto* s = std::get_if<ConfigValue::Scalar>(&v.value)) {
    out.push_back(get_string(key));
    (void)s;
    return out;
  }
  for (const auto& item : std::get<std::vector<ConfigValue::Scalar>>(v.value)) {
    const auto* str = std::get_if<std::string>(&item);
    if (!str) throw ParseError(where(key) + " must be an array of strings");
    out.push_back(*str);
  }
  return out;
}

std::vector<double> ConfigDoc::get_numbers(const std::string& key) const {
  const auto& v = at(key);
  if (std::holds_alternative<ConfigValue::Scalar>(v.value)) return {get_number(key)};
  std::vector<double> out;
  for (const auto& item : std::get<std::vector<ConfigValue::Scalar>>(v.value)) {
    const auto* d = std::get_if<double>(&item);
    if (!d) throw ParseError(where(key) + " must be an array of numbers");
    out.push_back(*d);
  }
  return out;
}

std::vector<std::string> ConfigDoc::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

void ConfigDoc::reject_unknown(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : values_) {
    if (!allowed.count(k)) {
      throw ParseError(origin_ + ":" + std::to_string(v.line) + ": unknown key '" + k + "'");
    }
  }
}

}  // namespace docstyle
