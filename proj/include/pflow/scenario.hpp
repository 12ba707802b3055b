#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pflow/grid.hpp"
#include "pflow/stepper.hpp"

namespace pflow {

enum class ScenarioKind { square_tanh, annulus, manufactured };
enum class RunMethod { forward, averaging, both };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full description of one benchmark run. The rectangle scenarios use
/// L/nx/ny, the annulus n_r/n_th; the remaining fields apply everywhere.
/// theta_from_steps replaces the theta value by the shift 1/2 + 1/(2N).
struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::square_tanh;
  double L = 2.0;
  double nu = 0.1;
  double period = 1.0;
  int steps = 20;
  double theta = 0.5;
  bool theta_from_steps = false;
  int nx = 48, ny = 48;
  int n_r = 24, n_th = 96;
  Problem problem = Problem::stokes;
  RunMethod method = RunMethod::both;
  double tolerance = 1e-8;
  int max_cycles = 50;

  friend bool operator==(const ScenarioConfig&,
                         const ScenarioConfig&) = default;
};

inline const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::square_tanh:
      return "square-tanh";
    case ScenarioKind::annulus:
      return "annulus";
    default:
      return "manufactured";
  }
}

inline const char* problem_name(Problem p) {
  return p == Problem::stokes ? "stokes" : "navier-stokes";
}

inline const char* run_method_name(RunMethod m) {
  switch (m) {
    case RunMethod::forward:
      return "forward";
    case RunMethod::averaging:
      return "averaging";
    default:
      return "both";
  }
}

/// Shear forcing on the square (-L,L)^2 with homogeneous Dirichlet walls:
/// f = tanh(y)/(L P) sin(2 pi t / P) (1, 0).
inline ScenarioConfig scenario_square_tanh(double L, double nu,
                                           double period) {
  if (!(L > 0.0) || !(nu > 0.0) || !(period > 0.0))
    throw ConfigError("scenario_square_tanh: L, nu, period must be positive");
  ScenarioConfig c;
  c.scenario = ScenarioKind::square_tanh;
  c.L = L;
  c.nu = nu;
  c.period = period;
  return c;
}

/// Ring flow between r = 1/2 and R = 5, driven by Dirichlet data alone:
/// the inner circle oscillates translationally at speed 1/2, the outer one
/// rotates with amplitude sin(2 pi t)/(2R). Nonlinear by default.
inline ScenarioConfig scenario_annulus(double nu) {
  if (!(nu > 0.0)) throw ConfigError("scenario_annulus: nu must be positive");
  ScenarioConfig c;
  c.scenario = ScenarioKind::annulus;
  c.nu = nu;
  c.period = 1.0;
  c.steps = 20;
  c.problem = Problem::navier_stokes;
  return c;
}

/// Stationary polynomial-times-trig solution with zero wall data; the
/// cyclic state of this scenario is the stationary solve itself, which
/// makes it a cheap end-to-end pipeline check.
inline ScenarioConfig scenario_manufactured(double nu) {
  if (!(nu > 0.0))
    throw ConfigError("scenario_manufactured: nu must be positive");
  ScenarioConfig c;
  c.scenario = ScenarioKind::manufactured;
  c.nu = nu;
  return c;
}

/// Boundary speed 1/2 at outer radius 5 gives Re = 5/nu on the annulus.
inline double reynolds_number(const ScenarioConfig& c) {
  if (c.scenario != ScenarioKind::annulus)
    throw ConfigError("reynolds_number: defined for the annulus scenario");
  return 5.0 / c.nu;
}

namespace detail {

constexpr double kRingInner = 0.5;
constexpr double kRingOuter = 5.0;

// w = (X Y', -X' Y) with X(x) = (1 - (x/L)^2)^2 and Y of the same form;
// divergence-free with X and X' vanishing at the walls. The pressure
// sin(pi x/L) sin(pi y/L) closes the forcing.
struct ManufacturedFlow {
  double L, nu;
  bool transport;

  double f0(double x) const {
    const double t = x / L;
    return (1.0 - t * t) * (1.0 - t * t);
  }
  double f1(double x) const {
    const double t = x / L;
    return -4.0 * t * (1.0 - t * t) / L;
  }
  double f2(double x) const {
    const double t = x / L;
    return (12.0 * t * t - 4.0) / (L * L);
  }
  double f3(double x) const { return 24.0 * x / (L * L * L * L); }

  std::array<double, 2> forcing(double x, double y) const {
    const double pi_L = std::numbers::pi / L;
    double fx = -nu * (f2(x) * f1(y) + f0(x) * f3(y)) +
                pi_L * std::cos(pi_L * x) * std::sin(pi_L * y);
    double fy = nu * (f3(x) * f0(y) + f1(x) * f2(y)) +
                pi_L * std::sin(pi_L * x) * std::cos(pi_L * y);
    if (transport) {
      const double u = f0(x) * f1(y), v = -f1(x) * f0(y);
      fx += u * f1(x) * f1(y) + v * f0(x) * f2(y);
      fy += u * (-f2(x) * f0(y)) + v * (-f1(x) * f1(y));
    }
    return {fx, fy};
  }
};

}  // namespace detail

/// Dirichlet and forcing data with the config's final parameter values
/// baked in.
inline BoundarySpec scenario_data(const ScenarioConfig& c) {
  BoundarySpec data;
  switch (c.scenario) {
    case ScenarioKind::square_tanh: {
      const double L = c.L, period = c.period;
      data.forcing = [L, period](double, double y, double t) {
        return std::array<double, 2>{
            std::tanh(y) / (L * period) *
                std::sin(2.0 * std::numbers::pi * t / period),
            0.0};
      };
      break;
    }
    case ScenarioKind::annulus: {
      const double period = c.period;
      const double split =
          0.5 * (detail::kRingInner + detail::kRingOuter);
      data.velocity = [period, split](double x, double y,
                                      double t) -> std::array<double, 2> {
        const double w = 2.0 * std::numbers::pi * t / period;
        if (std::hypot(x, y) < split)
          return {0.5 * std::cos(w), 0.5 * std::sin(w)};
        const double scale = std::sin(w) / (2.0 * detail::kRingOuter);
        return {-scale * y, scale * x};
      };
      break;
    }
    case ScenarioKind::manufactured: {
      const detail::ManufacturedFlow mms{c.L, c.nu,
                                         c.problem == Problem::navier_stokes};
      data.forcing = [mms](double x, double y, double) {
        return mms.forcing(x, y);
      };
      break;
    }
  }
  return data;
}

/// Everything the drivers need, with shifted theta and scenario data
/// resolved.
struct ResolvedScenario {
  GridSpec grid;
  ThetaConfig stepping;
  ProblemSpec problem;
  double tolerance = 1e-8;
  int max_cycles = 50;
  RunMethod method = RunMethod::both;
};

inline ResolvedScenario resolve(const ScenarioConfig& c) {
  if (!(c.tolerance > 0.0))
    throw ConfigError("config: tolerance must be positive");
  if (c.max_cycles < 1) throw ConfigError("config: max_cycles must be >= 1");
  if (!(c.nu > 0.0)) throw ConfigError("config: nu must be positive");

  ResolvedScenario r;
  r.grid = c.scenario == ScenarioKind::annulus
               ? GridSpec::annulus(detail::kRingInner, detail::kRingOuter,
                                   c.n_r, c.n_th)
               : GridSpec::rectangle(c.L, c.nx, c.ny);
  r.stepping.steps = c.steps;
  r.stepping.theta = c.theta_from_steps ? theta_shifted(c.steps) : c.theta;
  r.stepping.period = c.period;
  try {
    r.grid.validate();
    r.stepping.validate();
  } catch (const std::domain_error& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  r.problem = ProblemSpec{c.problem, c.nu, scenario_data(c)};
  r.tolerance = c.tolerance;
  r.max_cycles = c.max_cycles;
  r.method = c.method;
  return r;
}

namespace detail {

inline double number_field(const nlohmann::json& v, const char* key) {
  if (!v.is_number())
    throw ConfigError(std::string("config key '") + key +
                      "' must be a number");
  return v.get<double>();
}

inline int integer_field(const nlohmann::json& v, const char* key) {
  if (!v.is_number_integer())
    throw ConfigError(std::string("config key '") + key +
                      "' must be an integer");
  return v.get<int>();
}

}  // namespace detail

/// Strict JSON parser: every key must exist, apply to the chosen scenario,
/// and carry the right type. Omitted keys take the scenario's defaults.
inline ScenarioConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  if (!j.contains("scenario") || !j["scenario"].is_string())
    throw ConfigError("config: 'scenario' string is required");

  const std::string kind = j["scenario"].get<std::string>();
  ScenarioConfig c;
  if (kind == "square-tanh")
    c = scenario_square_tanh(2.0, 0.1, 1.0);
  else if (kind == "annulus")
    c = scenario_annulus(1.0);
  else if (kind == "manufactured")
    c = scenario_manufactured(0.1);
  else
    throw ConfigError("config: unknown scenario '" + kind + "'");
  const bool ring = c.scenario == ScenarioKind::annulus;

  for (const auto& [key, value] : j.items()) {
    if (key == "scenario") continue;
    if (key == "L" || key == "nx" || key == "ny") {
      if (ring)
        throw ConfigError("config: key '" + key +
                          "' does not apply to the annulus scenario");
      if (key == "L")
        c.L = detail::number_field(value, "L");
      else if (key == "nx")
        c.nx = detail::integer_field(value, "nx");
      else
        c.ny = detail::integer_field(value, "ny");
    } else if (key == "n_r" || key == "n_th") {
      if (!ring)
        throw ConfigError("config: key '" + key +
                          "' applies to the annulus scenario only");
      (key == "n_r" ? c.n_r : c.n_th) = detail::integer_field(value, key.c_str());
    } else if (key == "nu") {
      c.nu = detail::number_field(value, "nu");
    } else if (key == "period") {
      c.period = detail::number_field(value, "period");
    } else if (key == "steps") {
      c.steps = detail::integer_field(value, "steps");
    } else if (key == "theta") {
      if (value.is_string() && value.get<std::string>() == "shifted") {
        c.theta_from_steps = true;
      } else {
        c.theta = detail::number_field(value, "theta");
        c.theta_from_steps = false;
      }
    } else if (key == "problem") {
      const std::string p = value.is_string() ? value.get<std::string>() : "";
      if (p == "stokes")
        c.problem = Problem::stokes;
      else if (p == "navier-stokes")
        c.problem = Problem::navier_stokes;
      else
        throw ConfigError(
            "config: 'problem' must be \"stokes\" or \"navier-stokes\"");
    } else if (key == "method") {
      const std::string m = value.is_string() ? value.get<std::string>() : "";
      if (m == "forward")
        c.method = RunMethod::forward;
      else if (m == "averaging")
        c.method = RunMethod::averaging;
      else if (m == "both")
        c.method = RunMethod::both;
      else
        throw ConfigError(
            "config: 'method' must be \"forward\", \"averaging\" or "
            "\"both\"");
    } else if (key == "tolerance") {
      c.tolerance = detail::number_field(value, "tolerance");
    } else if (key == "max_cycles") {
      c.max_cycles = detail::integer_field(value, "max_cycles");
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  return c;
}

/// Canonical serialization (sorted keys, applicable fields only); the
/// config hash in every report header is taken over these bytes.
inline std::string serialize_config(const ScenarioConfig& c) {
  nlohmann::json j;
  j["scenario"] = scenario_name(c.scenario);
  if (c.scenario == ScenarioKind::annulus) {
    j["n_r"] = c.n_r;
    j["n_th"] = c.n_th;
  } else {
    j["L"] = c.L;
    j["nx"] = c.nx;
    j["ny"] = c.ny;
  }
  j["nu"] = c.nu;
  j["period"] = c.period;
  j["steps"] = c.steps;
  if (c.theta_from_steps)
    j["theta"] = "shifted";
  else
    j["theta"] = c.theta;
  j["problem"] = problem_name(c.problem);
  j["method"] = run_method_name(c.method);
  j["tolerance"] = c.tolerance;
  j["max_cycles"] = c.max_cycles;
  return j.dump();
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string config_hash(const ScenarioConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_config(c))));
  return buf;
}

}  // namespace pflow
