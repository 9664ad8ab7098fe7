#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evsched {

/// Flat `key = value` text. Blank lines and lines starting with '#' are
/// ignored; a later assignment overrides an earlier one.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Keys starting with `prefix`, e.g. all "evse." entries.
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;

 private:
  std::map<std::string, std::string> values_;
};

struct EvseConfig {
  std::string evse_id;
  double supply_capacity_kw;
  double switching_minutes;
};

/// Site description. EVSEs not listed explicitly fall back to the defaults.
///
///   site_id = jpl
///   dso_capacity_kw = 195
///   default_supply_capacity_kw = 50
///   default_switching_minutes = 5
///   evse.EVSE-00.supply_capacity_kw = 50
///   evse.EVSE-00.switching_minutes = 5
struct SiteConfig {
  std::string site_id = "site";
  double dso_capacity_kw;
  double default_supply_capacity_kw;
  double default_switching_minutes;
  std::vector<EvseConfig> evses;

  SiteConfig();

  /// Listed entry for `evse_id`, or one built from the defaults.
  EvseConfig evse(const std::string& evse_id) const;

  /// Throws std::invalid_argument on a non-positive capacity or negative switching time.
  void check() const;

  static SiteConfig from(const KeyValueConfig& kv);
  std::string to_text() const;
};

}  // namespace evsched
