#pragma once

#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ctsftm/errors.hpp"

namespace ctsftm {

// Flat key = value configuration text:
//
//   # comment
//   n = 500
//   index_choice = "optimal"
//   psi2 = [0.3]
//   refill_features = [l1, l2, gap_u, k]
//   force_gap_epsilon = false
//
// Values are numbers, booleans, quoted or bare strings, or [v, v, ...] lists.
// Keys a subcommand does not recognize are reported as errors.
class ConfigMap {
 public:
  using Scalar = std::variant<double, bool, std::string>;
  struct Value {
    bool is_list = false;
    Scalar scalar;
    std::vector<Scalar> list;
  };

  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  double number(const std::string& key, double fallback);
  double required_number(const std::string& key);
  bool boolean(const std::string& key, bool fallback);
  std::string str(const std::string& key, const std::string& fallback);
  std::string required_str(const std::string& key);
  std::vector<double> number_list(const std::string& key, std::vector<double> fallback = {});
  std::vector<std::string> string_list(const std::string& key,
                                       std::vector<std::string> fallback = {});

  // Keys never read by any accessor; used to flag typos.
  std::vector<std::string> unconsumed() const;

 private:
  const Value& get(const std::string& key);
  std::map<std::string, Value> values_;
  std::set<std::string> consumed_;
};

}  // namespace ctsftm
