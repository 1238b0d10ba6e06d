#include "ctsftm/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace ctsftm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

ConfigMap::Scalar parse_scalar(const std::string& tok, const std::string& where) {
  if (tok.empty()) throw ConfigError(where + ": empty value");
  if (tok == "true") return true;
  if (tok == "false") return false;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"')
    return tok.substr(1, tok.size() - 2);
  // number?
  {
    std::size_t pos = 0;
    try {
      const double v = std::stod(tok, &pos);
      if (pos == tok.size()) return v;
    } catch (const std::exception&) {
    }
  }
  return tok;  // bare string
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
  ConfigMap cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    // strip comments outside quotes
    bool in_quote = false;
    std::string body;
    for (char ch : line) {
      if (ch == '"') in_quote = !in_quote;
      if (ch == '#' && !in_quote) break;
      body.push_back(ch);
    }
    body = trim(body);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string val = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (cfg.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    Value v;
    if (!val.empty() && val.front() == '[') {
      if (val.back() != ']') throw ConfigError(where + ": unterminated list");
      v.is_list = true;
      const std::string inner = trim(val.substr(1, val.size() - 2));
      if (!inner.empty()) {
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ','))
          v.list.push_back(parse_scalar(trim(item), where));
      }
    } else {
      v.scalar = parse_scalar(val, where);
    }
    cfg.values_[key] = std::move(v);
  }
  return cfg;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

bool ConfigMap::has(const std::string& key) const { return values_.count(key) > 0; }

const ConfigMap::Value& ConfigMap::get(const std::string& key) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double ConfigMap::number(const std::string& key, double fallback) {
  consumed_.insert(key);
  if (!has(key)) return fallback;
  return required_number(key);
}

double ConfigMap::required_number(const std::string& key) {
  const Value& v = get(key);
  if (v.is_list || !std::holds_alternative<double>(v.scalar))
    throw ConfigError("config key '" + key + "' must be a number");
  return std::get<double>(v.scalar);
}

bool ConfigMap::boolean(const std::string& key, bool fallback) {
  consumed_.insert(key);
  if (!has(key)) return fallback;
  const Value& v = get(key);
  if (v.is_list || !std::holds_alternative<bool>(v.scalar))
    throw ConfigError("config key '" + key + "' must be true or false");
  return std::get<bool>(v.scalar);
}

std::string ConfigMap::str(const std::string& key, const std::string& fallback) {
  consumed_.insert(key);
  if (!has(key)) return fallback;
  return required_str(key);
}

std::string ConfigMap::required_str(const std::string& key) {
  const Value& v = get(key);
  if (v.is_list || !std::holds_alternative<std::string>(v.scalar))
    throw ConfigError("config key '" + key + "' must be a string");
  return std::get<std::string>(v.scalar);
}

std::vector<double> ConfigMap::number_list(const std::string& key,
                                           std::vector<double> fallback) {
  consumed_.insert(key);
  if (!has(key)) return fallback;
  const Value& v = get(key);
  if (!v.is_list) throw ConfigError("config key '" + key + "' must be a list");
  std::vector<double> out;
  for (const auto& s : v.list) {
    if (!std::holds_alternative<double>(s))
      throw ConfigError("config key '" + key + "' must list numbers");
    out.push_back(std::get<double>(s));
  }
  return out;
}

std::vector<std::string> ConfigMap::string_list(const std::string& key,
                                                std::vector<std::string> fallback) {
  consumed_.insert(key);
  if (!has(key)) return fallback;
  const Value& v = get(key);
  if (!v.is_list) throw ConfigError("config key '" + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& s : v.list) {
    if (std::holds_alternative<std::string>(s))
      out.push_back(std::get<std::string>(s));
    else if (std::holds_alternative<double>(s)) {
      std::ostringstream os;
      os << std::get<double>(s);
      out.push_back(os.str());
    } else
      throw ConfigError("config key '" + key + "' must list strings");
  }
  return out;
}

std::vector<std::string> ConfigMap::unconsumed() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!consumed_.count(k)) out.push_back(k);
  return out;
}

}  // namespace ctsftm
