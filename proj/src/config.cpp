#include "evsched/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evsched/errors.hpp"
#include "evsched/session.hpp"

namespace evsched {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError("config key '" + key + "': expected a number, got '" + text + "'");
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    kv.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? to_double(key, *v) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size())
    throw ParseError("config key '" + key + "': expected an integer, got '" + *v + "'");
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ParseError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  std::string_view rest = *v;
  while (!rest.empty()) {
    auto comma = rest.find(',');
    auto item = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (!item.empty()) out.push_back(to_double(key, std::string(item)));
  }
  return out;
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (auto it = values_.lower_bound(std::string(prefix)); it != values_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

SiteConfig::SiteConfig()
    : dso_capacity_kw(kDefaultDsoCapacityKw),
      default_supply_capacity_kw(kDefaultSupplyCapacityKw),
      default_switching_minutes(kDefaultSwitchingMinutes) {}

EvseConfig SiteConfig::evse(const std::string& evse_id) const {
  for (const auto& e : evses)
    if (e.evse_id == evse_id) return e;
  return {evse_id, default_supply_capacity_kw, default_switching_minutes};
}

void SiteConfig::check() const {
  if (!(dso_capacity_kw > 0.0)) throw std::invalid_argument("site: dso_capacity_kw must be positive");
  if (!(default_supply_capacity_kw > 0.0))
    throw std::invalid_argument("site: default supply capacity must be positive");
  if (!(default_switching_minutes >= 0.0)) throw std::invalid_argument("site: switching minutes must be >= 0");
  for (const auto& e : evses) {
    if (!(e.supply_capacity_kw > 0.0))
      throw std::invalid_argument("site: EVSE '" + e.evse_id + "' supply capacity must be positive");
    if (!(e.switching_minutes >= 0.0))
      throw std::invalid_argument("site: EVSE '" + e.evse_id + "' switching minutes must be >= 0");
  }
}

SiteConfig SiteConfig::from(const KeyValueConfig& kv) {
  SiteConfig site;
  site.site_id = kv.get_string("site_id", site.site_id);
  site.dso_capacity_kw = kv.get_double("dso_capacity_kw", site.dso_capacity_kw);
  site.default_supply_capacity_kw = kv.get_double("default_supply_capacity_kw", site.default_supply_capacity_kw);
  site.default_switching_minutes = kv.get_double("default_switching_minutes", site.default_switching_minutes);

  std::map<std::string, EvseConfig> listed;
  const std::string prefix = "evse.";
  for (const auto& key : kv.keys_with_prefix(prefix)) {
    auto dot = key.rfind('.');
    if (dot <= prefix.size()) throw ParseError("config key '" + key + "': expected evse.<id>.<field>");
    std::string id = key.substr(prefix.size(), dot - prefix.size());
    std::string field = key.substr(dot + 1);
    auto [it, fresh] = listed.try_emplace(id, EvseConfig{id, site.default_supply_capacity_kw,
                                                         site.default_switching_minutes});
    if (field == "supply_capacity_kw")
      it->second.supply_capacity_kw = kv.get_double(key, 0.0);
    else if (field == "switching_minutes")
      it->second.switching_minutes = kv.get_double(key, 0.0);
    else
      throw ParseError("config key '" + key + "': unknown EVSE field '" + field + "'");
  }
  for (auto& [id, e] : listed) site.evses.push_back(e);
  site.check();
  return site;
}

std::string SiteConfig::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "site_id = " << site_id << "\n"
      << "dso_capacity_kw = " << dso_capacity_kw << "\n"
      << "default_supply_capacity_kw = " << default_supply_capacity_kw << "\n"
      << "default_switching_minutes = " << default_switching_minutes << "\n";
  for (const auto& e : evses) {
    out << "evse." << e.evse_id << ".supply_capacity_kw = " << e.supply_capacity_kw << "\n"
        << "evse." << e.evse_id << ".switching_minutes = " << e.switching_minutes << "\n";
  }
  return out.str();
}

}  // namespace evsched
