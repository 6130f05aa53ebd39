#include "pbench/config.hpp"

#include <boost/algorithm/string.hpp>

#include <charconv>

namespace pbench {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  for (auto& p : parts) boost::trim(p);
  std::erase_if(parts, [](const std::string& p) { return p.empty(); });
  return parts;
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config cfg;
  std::vector<std::string> lines;
  boost::split(lines, text, boost::is_any_of("\n"));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = boost::trim_copy(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(i + 1) + ": expected 'key = value'");
    std::string key = boost::trim_copy(line.substr(0, eq));
    std::string value = boost::trim_copy(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(i + 1) + ": empty key");
    cfg.set(std::move(key), std::move(value));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

void Config::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

bool Config::contains(const std::string& key) const { return entries_.count(key) != 0; }

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, std::string fallback) const {
  return get(key).value_or(std::move(fallback));
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  return v ? parse_number<long long>(key, *v) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_number<std::uint64_t>(key, *v) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string s = boost::to_lower_copy(*v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> Config::get_double_list(const std::string& key, std::vector<double> fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& p : split_list(*v)) out.push_back(parse_number<double>(key, p));
  return out;
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key, std::vector<std::uint64_t> fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<std::uint64_t> out;
  for (const auto& p : split_list(*v)) out.push_back(parse_number<std::uint64_t>(key, p));
  return out;
}

}  // namespace pbench
