#include "qrsub_cli/config_file.hpp"

#include "qrsub/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace qrsub::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = s.find(',');
    out.emplace_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw ConfigError(key, "invalid value '" + std::string(text) + "' for key '" + key + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key, "invalid boolean '" + std::string(text) + "' for key '" + key + "'");
}

template <class T>
std::vector<T> parse_numbers(const std::string& key, std::string_view text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<T>(key, item));
  return out;
}

// Wraps enum parsers so a bad value is reported against its key.
template <class F>
auto parse_named(const std::string& key, const std::string& value, F&& parse) {
  try {
    return parse(value);
  } catch (const InvalidArgument& e) {
    throw ConfigError(key, "invalid value for key '" + key + "': " + e.what());
  }
}

}  // namespace

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> entries;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(line_no) + ": empty key");
    entries[key] = std::string(trim(line.substr(eq + 1)));
  }
  return entries;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

bool apply_config(const std::map<std::string, std::string>& entries, ExperimentConfig& c, bool* sweep) {
  bool seeded = false;
  for (const auto& [key, value] : entries) {
    if (key == "n_rows") {
      c.n_rows = parse_number<Index>(key, value);
    } else if (key == "p") {
      c.p = parse_number<Index>(key, value);
    } else if (key == "covariate_law") {
      c.covariate_law = parse_named(key, value, [](const std::string& v) { return parse_covariate_law(v); });
    } else if (key == "error_law") {
      c.error_law = parse_named(key, value, [](const std::string& v) { return parse_error_law(v); });
    } else if (key == "tau") {
      c.taus = parse_numbers<double>(key, value);
    } else if (key == "n0") {
      c.n0 = parse_number<Index>(key, value);
    } else if (key == "n") {
      c.ns = parse_numbers<Index>(key, value);
    } else if (key == "B") {
      c.bs = parse_numbers<Index>(key, value);
    } else if (key == "replicates") {
      c.replicates = parse_number<Index>(key, value);
    } else if (key == "methods") {
      c.methods.clear();
      for (const auto& m : split_list(value)) {
        c.methods.push_back(parse_named(key, m, [](const std::string& v) { return parse_bench_method(v); }));
      }
    } else if (key == "base_seed") {
      c.base_seed = parse_number<std::uint64_t>(key, value);
      seeded = true;
    } else if (key == "noise_scale") {
      c.noise_scale = parse_number<double>(key, value);
    } else if (key == "level") {
      c.level = parse_number<double>(key, value);
    } else if (key == "add_intercept") {
      c.add_intercept = parse_bool(key, value);
    } else if (key == "full_data_cap") {
      c.full_data_cap = parse_number<Index>(key, value);
    } else if (key == "threads") {
      c.threads = parse_number<unsigned>(key, value);
    } else if (key == "sweep" && sweep) {
      *sweep = parse_bool(key, value);
    } else {
      throw ConfigError(key, "unknown config key '" + key + "'");
    }
  }
  return seeded;
}

}  // namespace qrsub::cli
