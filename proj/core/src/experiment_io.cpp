#include "qrsub/errors.hpp"
#include "qrsub/experiment.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace qrsub {

namespace {

using nlohmann::json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(std::string(to_string(m)));
  return {
      {"n_rows", c.n_rows},
      {"p", c.p},
      {"covariate_law", std::string(to_string(c.covariate_law))},
      {"error_law", std::string(to_string(c.error_law))},
      {"tau", c.taus},
      {"n0", c.n0},
      {"n", c.ns},
      {"B", c.bs},
      {"replicates", c.replicates},
      {"methods", methods},
      {"base_seed", c.base_seed},
      {"noise_scale", c.noise_scale},
      {"level", c.level},
      {"add_intercept", c.add_intercept},
      {"full_data_cap", c.full_data_cap},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.n_rows = j.at("n_rows").get<Index>();
  c.p = j.at("p").get<Index>();
  c.covariate_law = parse_covariate_law(j.at("covariate_law").get<std::string>());
  c.error_law = parse_error_law(j.at("error_law").get<std::string>());
  c.taus = j.at("tau").get<std::vector<double>>();
  c.n0 = j.at("n0").get<Index>();
  c.ns = j.at("n").get<std::vector<Index>>();
  c.bs = j.at("B").get<std::vector<Index>>();
  c.replicates = j.at("replicates").get<Index>();
  c.methods.clear();
  for (const auto& m : j.at("methods")) c.methods.push_back(parse_bench_method(m.get<std::string>()));
  c.base_seed = j.at("base_seed").get<std::uint64_t>();
  c.noise_scale = j.at("noise_scale").get<double>();
  c.level = j.at("level").get<double>();
  c.add_intercept = j.at("add_intercept").get<bool>();
  c.full_data_cap = j.at("full_data_cap").get<Index>();
  return c;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string result_to_csv(const ExperimentResult& result) {
  std::string out = "method,tau,n,B,S,mse,emse";
  for (Index j = 1; j <= result.config.p; ++j) out += ",coverage_" + std::to_string(j);
  out += ",runtime_ms\n";
  for (const auto& c : result.cells) {
    out += std::string(to_string(c.method)) + "," + format_number(c.tau) + "," +
           std::to_string(c.n) + "," + std::to_string(c.batches) + "," +
           std::to_string(c.replicates) + "," + format_number(c.empirical_mse) + "," +
           format_number(c.mean_estimated_mse);
    for (double cov : c.coverage) out += "," + format_number(cov);
    out += "," + format_number(c.mean_runtime_ms) + "\n";
  }
  return out;
}

std::string result_to_json(const ExperimentResult& result) {
  json cells = json::array();
  for (const auto& c : result.cells) {
    json coverage = json::array();
    for (double v : c.coverage) coverage.push_back(number_or_null(v));
    json cell = {
        {"method", std::string(to_string(c.method))},
        {"tau", c.tau},
        {"n", c.n},
        {"B", c.batches},
        {"S", c.replicates},
        {"mse", number_or_null(c.empirical_mse)},
        {"emse", number_or_null(c.mean_estimated_mse)},
        {"coverage", coverage},
        {"runtime_ms", number_or_null(c.mean_runtime_ms)},
        {"failed", c.failed},
    };
    if (c.failed) cell["error"] = c.error;
    cells.push_back(std::move(cell));
  }
  json doc = {
      {"metadata", {{"version", result.version}, {"rng", result.rng}, {"config", config_to_json(result.config)}}},
      {"cells", cells},
  };
  return doc.dump(2) + "\n";
}

ExperimentResult result_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed result JSON: ") + e.what());
  }
  try {
    ExperimentResult result;
    const auto& meta = doc.at("metadata");
    result.version = meta.at("version").get<std::string>();
    result.rng = meta.at("rng").get<std::string>();
    result.config = config_from_json(meta.at("config"));
    for (const auto& j : doc.at("cells")) {
      CellResult c;
      c.method = parse_bench_method(j.at("method").get<std::string>());
      c.tau = j.at("tau").get<double>();
      c.n = j.at("n").get<Index>();
      c.batches = j.at("B").get<Index>();
      c.replicates = j.at("S").get<Index>();
      c.empirical_mse = number_or_nan(j.at("mse"));
      c.mean_estimated_mse = number_or_nan(j.at("emse"));
      for (const auto& v : j.at("coverage")) c.coverage.push_back(number_or_nan(v));
      c.mean_runtime_ms = number_or_nan(j.at("runtime_ms"));
      c.failed = j.at("failed").get<bool>();
      if (c.failed) c.error = j.value("error", std::string{});
      result.cells.push_back(std::move(c));
    }
    return result;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("result JSON is missing fields: ") + e.what());
  }
}

void emit(const ExperimentResult& result, OutputFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << (format == OutputFormat::Csv ? result_to_csv(result) : result_to_json(result));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

}  // namespace qrsub
