#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "echodet/core/common.hpp"

namespace echodet {

// flat `key = value` text config; '#' starts a comment
class FlatConfig {
 public:
  FlatConfig() = default;

  static FlatConfig parse_file(const std::string& path) {
    std::ifstream f(path);
    ECHODET_CHECK(f.good(), "cannot open config file " << path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  static FlatConfig parse(const std::string& text, const std::string& origin = "<string>") {
    FlatConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        size_t b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
      };
      std::string t = trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      ECHODET_CHECK(eq != std::string::npos,
                    origin << ":" << lineno << ": expected key = value, got '" << t << "'");
      std::string key = trim(t.substr(0, eq));
      std::string val = trim(t.substr(eq + 1));
      ECHODET_CHECK(!key.empty(), origin << ":" << lineno << ": empty key");
      cfg.kv_[key] = val;
    }
    return cfg;
  }

  bool has(const std::string& k) const { return kv_.count(k) > 0; }

  std::string str(const std::string& k, const std::string& dflt) const {
    auto it = kv_.find(k);
    return it == kv_.end() ? dflt : it->second;
  }
  double num(const std::string& k, double dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    try {
      return std::stod(it->second);
    } catch (...) {
      ECHODET_CHECK(false, "config key " << k << ": '" << it->second << "' is not a number");
    }
    return dflt;
  }
  int64_t integer(const std::string& k, int64_t dflt) const {
    return static_cast<int64_t>(num(k, static_cast<double>(dflt)));
  }
  bool flag(const std::string& k, bool dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    ECHODET_CHECK(false, "config key " << k << ": '" << v << "' is not a boolean");
    return dflt;
  }
  // comma- or bracket-delimited integer list, e.g. "3,6" or "[3,6]"
  std::vector<int64_t> int_list(const std::string& k, std::vector<int64_t> dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    std::string v = it->second;
    for (char& c : v)
      if (c == '[' || c == ']' || c == ',') c = ' ';
    std::istringstream in(v);
    std::vector<int64_t> out;
    int64_t x;
    while (in >> x) out.push_back(x);
    ECHODET_CHECK(!out.empty(), "config key " << k << ": empty list");
    return out;
  }

  const std::map<std::string, std::string>& items() const { return kv_; }
  void set(const std::string& k, const std::string& v) { kv_[k] = v; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace echodet
