#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pflow/cycler.hpp"
#include "pflow/scenario.hpp"
#include "pflow/sweep.hpp"

namespace pflow {

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ReportError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw ReportError("write failed for '" + path.string() + "'");
}

inline std::filesystem::path ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw ReportError("cannot create directory '" + dir + "': " + ec.message());
  return dir;
}

inline std::string value_token(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

/// Log-plottable decay curve: one (cycle, periodicity error) pair per
/// line.
inline std::string plot_data_csv(const RunResult& result) {
  std::string out = "cycle,periodicity_error\n";
  char buf[64];
  for (const auto& r : result.reports) {
    std::snprintf(buf, sizeof buf, "%d,%.17g\n", r.cycle,
                  r.periodicity_error);
    out += buf;
  }
  return out;
}

/// Per-cycle and plot-data files for one scenario's runs, each headed by
/// the resolved config hash. Returns the written paths in order.
inline std::vector<std::string> emit_solve_report(
    const std::string& dir, const ScenarioConfig& cfg,
    const std::vector<RunResult>& runs) {
  if (runs.empty()) throw ReportError("emit_solve_report: no results");
  const auto root = detail::ensure_directory(dir);
  const std::string provenance = "# config " + config_hash(cfg) + "\n";

  std::vector<std::string> paths;
  for (const auto& run : runs) {
    const std::string name = method_name(run.method);
    std::ostringstream cycles;
    write_cycle_csv(cycles, run);
    const auto cycles_path = root / ("cycles_" + name + ".csv");
    detail::write_text_file(cycles_path, provenance + cycles.str());
    paths.push_back(cycles_path.string());

    const auto plot_path = root / ("plot_" + name + ".csv");
    detail::write_text_file(plot_path, provenance + plot_data_csv(run));
    paths.push_back(plot_path.string());
  }
  return paths;
}

/// Hash over the full sweep definition (base config, axis, values).
inline std::string sweep_hash(const SweepSpec& spec) {
  nlohmann::json j;
  j["axis"] = spec.axis;
  j["base"] = nlohmann::json::parse(serialize_config(spec.base));
  j["values"] = spec.values;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

/// Summary CSV plus per-cell cycle and plot files. Failed cells appear in
/// the summary with empty rate and converged = 0 but write no curve files.
inline std::vector<std::string> emit_sweep_report(
    const std::string& dir, const SweepSpec& spec,
    const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw ReportError("emit_sweep_report: no results");
  const auto root = detail::ensure_directory(dir);

  std::string summary = "# config " + sweep_hash(spec) + "\n";
  summary += "axis_value,method,cycles,sigma_tail,converged\n";
  char buf[128];
  for (const auto& row : rows) {
    std::string sigma;
    if (row.sigma_tail) {
      std::snprintf(buf, sizeof buf, "%.17g", *row.sigma_tail);
      sigma = buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%s,%d,%s,%d\n", row.axis_value,
                  method_name(row.method), row.cycles, sigma.c_str(),
                  row.converged ? 1 : 0);
    summary += buf;
  }
  std::vector<std::string> paths;
  const auto summary_path = root / "sweep_summary.csv";
  detail::write_text_file(summary_path, summary);
  paths.push_back(summary_path.string());

  for (const auto& row : rows) {
    if (!row.error.empty()) continue;
    const std::string stem = spec.axis + "_" +
                             detail::value_token(row.axis_value) + "_" +
                             method_name(row.method);
    const std::string provenance = "# config " + config_hash(row.config) + "\n";
    std::ostringstream cycles;
    write_cycle_csv(cycles, row.result);
    const auto cycles_path = root / ("cycles_" + stem + ".csv");
    detail::write_text_file(cycles_path, provenance + cycles.str());
    paths.push_back(cycles_path.string());

    const auto plot_path = root / ("plot_" + stem + ".csv");
    detail::write_text_file(plot_path, provenance + plot_data_csv(row.result));
    paths.push_back(plot_path.string());
  }
  return paths;
}

}  // namespace pflow
