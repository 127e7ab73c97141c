#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "deadbeat/errors.hpp"
#include "deadbeat/harness.hpp"
#include "deadbeat/model.hpp"
#include "deadbeat/numerics.hpp"
#include "deadbeat/observer.hpp"

namespace deadbeat::app {

enum class InputKind { constant, sinusoid, table };

struct InputSpec {
  InputKind kind = InputKind::constant;
  Vec value;      // constant
  Vec offset;     // sinusoid
  Vec amplitude;  // sinusoid
  double frequency = 0.0;
  /// Piecewise-constant table: (switch time, value) rows sorted by time.
  std::vector<std::pair<double, Vec>> table;
};

enum class SweepKind { bibo, cico, margin };

struct SweepSpec {
  SweepKind kind = SweepKind::bibo;
  std::vector<double> amplitudes;
  std::vector<std::uint64_t> seeds;
  double epsilon = 0.0;
  double ceiling = 1.0;
  double floor_ratio = 1e-6;
  int bisection_steps = 12;
  double tail_factor = 10.0;
  bool negative_control = false;
};

struct ExperimentConfig {
  std::string model_name;
  ModelParams model_params;
  std::optional<LinearCoefficients> linear;
  SystemModel model;

  Vec x0, y0, z0, w0;
  InputSpec input;
  double h_s = 5e-4;
  double T = 0.0;
  double r = 0.0;
  double tol = kDefaultGramianTol;
  ObserverMode mode = ObserverMode::reduced_order;
  FailurePolicy on_failure = FailurePolicy::abort;
  NoiseSpec noise;
  std::optional<SweepSpec> sweep;
  double check_window_start = 0.0;
  std::string output_dir = ".";
  std::string output_name;

  SampleGrid grid() const { return SampleGrid::covering(0.0, h_s, T); }
};

namespace detail {

inline int line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.line >= 0 ? mark.line + 1 : 0;
}

inline void only_keys(const YAML::Node& map, const std::string& path, const std::set<std::string>& allowed) {
  if (!map.IsMap()) throw ConfigError(path, line_of(map), "expected a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError(path.empty() ? key : path + "." + key, line_of(kv.first), "unknown field");
  }
}

inline double as_real(const YAML::Node& node, const std::string& path) {
  double v = 0.0;
  try {
    v = node.as<double>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, line_of(node), "expected a real number");
  }
  if (!std::isfinite(v)) throw ConfigError(path, line_of(node), "must be finite");
  return v;
}

inline std::int64_t as_int(const YAML::Node& node, const std::string& path) {
  try {
    return node.as<std::int64_t>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, line_of(node), "expected an integer");
  }
}

inline std::string as_str(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError(path, line_of(node), "expected a string");
  return node.as<std::string>();
}

inline bool as_bool(const YAML::Node& node, const std::string& path) {
  try {
    return node.as<bool>();
  } catch (const YAML::Exception&) {
    throw ConfigError(path, line_of(node), "expected true or false");
  }
}

inline Vec as_vec(const YAML::Node& node, const std::string& path) {
  if (node.IsScalar()) return Vec::Constant(1, as_real(node, path));
  if (!node.IsSequence()) throw ConfigError(path, line_of(node), "expected a list of numbers");
  Vec v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = as_real(node[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline Mat as_mat(const YAML::Node& node, const std::string& path, Eigen::Index cols_if_empty = 0) {
  if (!node.IsSequence()) throw ConfigError(path, line_of(node), "expected a list of rows");
  if (node.size() == 0) return Mat(0, cols_if_empty);
  Mat m;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const Vec row = as_vec(node[i], path + "[" + std::to_string(i) + "]");
    if (i == 0) m.resize(static_cast<Eigen::Index>(node.size()), row.size());
    if (row.size() != m.cols()) throw ConfigError(path, line_of(node[i]), "rows have different lengths");
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

inline void expect_dim(const Vec& v, int dim, const std::string& path, const YAML::Node& node) {
  if (v.size() != dim)
    throw ConfigError(path, line_of(node), "expected " + std::to_string(dim) + " entries, got " + std::to_string(v.size()));
}

/// Whether `duration` is a whole multiple of `step` up to grid snapping slack.
inline bool is_multiple(double duration, double step) {
  const double s = duration / step;
  return std::abs(s - std::round(s)) <= kGridSnapTolerance && std::round(s) >= 1.0;
}

inline void parse_model(const YAML::Node& node, ExperimentConfig& cfg) {
  only_keys(node, "model", {"name", "params", "A", "b", "Ct", "Fy", "Fu"});
  if (!node["name"]) throw ConfigError("model.name", line_of(node), "missing");
  cfg.model_name = as_str(node["name"], "model.name");

  if (cfg.model_name == "linear") {
    for (const char* key : {"A", "Ct"})
      if (!node[key]) throw ConfigError(std::string("model.") + key, line_of(node), "required for linear models");
    LinearCoefficients c;
    c.A = as_mat(node["A"], "model.A");
    c.Ct = as_mat(node["Ct"], "model.Ct");
    const auto n = c.A.rows();
    const auto k = c.Ct.rows();
    c.b = node["b"] ? as_vec(node["b"], "model.b") : Vec::Zero(n);
    c.Fy = node["Fy"] ? as_mat(node["Fy"], "model.Fy") : Mat::Zero(k, k);
    c.Fu = node["Fu"] ? as_mat(node["Fu"], "model.Fu", 0) : Mat::Zero(k, 0);
    if (node["Fu"] && c.Fu.rows() == 0) c.Fu = Mat::Zero(k, 0);
    try {
      cfg.model = make_linear_model(c, "linear");
    } catch (const ModelError& e) {
      throw ConfigError("model", line_of(node), e.what());
    }
    cfg.linear = c;
    return;
  }

  for (const char* key : {"A", "b", "Ct", "Fy", "Fu"})
    if (node[key]) throw ConfigError(std::string("model.") + key, line_of(node[key]), "only valid for model 'linear'");
  if (node["params"]) {
    const YAML::Node params = node["params"];
    if (!params.IsMap()) throw ConfigError("model.params", line_of(params), "expected a mapping");
    for (const auto& kv : params) {
      const auto key = kv.first.as<std::string>();
      cfg.model_params[key] = as_real(kv.second, "model.params." + key);
    }
  }
  try {
    cfg.model = build_catalog_model(cfg.model_name, cfg.model_params);
  } catch (const CatalogError& e) {
    throw ConfigError("model.name", line_of(node["name"]), e.what());
  } catch (const ModelError& e) {
    throw ConfigError("model.params", line_of(node), e.what());
  }
}

inline void parse_input(const YAML::Node& node, ExperimentConfig& cfg) {
  const int m = cfg.model.m;
  InputSpec& in = cfg.input;
  in.value = Vec::Zero(m);
  if (!node) return;
  only_keys(node, "input", {"kind", "value", "offset", "amplitude", "frequency", "table"});
  const std::string kind = node["kind"] ? as_str(node["kind"], "input.kind") : "constant";
  if (kind == "constant") {
    in.kind = InputKind::constant;
    if (node["value"]) {
      in.value = as_vec(node["value"], "input.value");
      expect_dim(in.value, m, "input.value", node["value"]);
    }
  } else if (kind == "sinusoid") {
    in.kind = InputKind::sinusoid;
    in.offset = node["offset"] ? as_vec(node["offset"], "input.offset") : Vec::Zero(m);
    in.amplitude = node["amplitude"] ? as_vec(node["amplitude"], "input.amplitude") : Vec::Zero(m);
    expect_dim(in.offset, m, "input.offset", node["offset"] ? node["offset"] : node);
    expect_dim(in.amplitude, m, "input.amplitude", node["amplitude"] ? node["amplitude"] : node);
    in.frequency = node["frequency"] ? as_real(node["frequency"], "input.frequency") : 0.0;
  } else if (kind == "table") {
    in.kind = InputKind::table;
    if (!node["table"] || !node["table"].IsSequence() || node["table"].size() == 0)
      throw ConfigError("input.table", line_of(node), "piecewise-constant input needs a non-empty table");
    const YAML::Node table = node["table"];
    for (std::size_t i = 0; i < table.size(); ++i) {
      const std::string path = "input.table[" + std::to_string(i) + "]";
      const Vec row = as_vec(table[i], path);
      if (row.size() != m + 1) throw ConfigError(path, line_of(table[i]), "expected [t, u_1..u_m]");
      if (!in.table.empty() && !(row(0) > in.table.back().first))
        throw ConfigError(path, line_of(table[i]), "switch times must increase");
      in.table.emplace_back(row(0), row.tail(m));
    }
    if (in.table.front().first > 0.0)
      throw ConfigError("input.table[0]", line_of(table[0]), "the first switch time must be <= 0");
  } else {
    throw ConfigError("input.kind", line_of(node["kind"]), "expected constant, sinusoid or table");
  }
}

inline NoiseSpec parse_noise(const YAML::Node& node, std::uint64_t default_seed) {
  NoiseSpec spec;
  spec.seed = default_seed;
  if (!node) return spec;
  only_keys(node, "noise", {"kind", "amplitude", "frequency", "decay", "seed"});
  const std::string kind = node["kind"] ? as_str(node["kind"], "noise.kind") : "none";
  if (kind == "none")
    spec.kind = NoiseKind::none;
  else if (kind == "uniform")
    spec.kind = NoiseKind::uniform;
  else if (kind == "sinusoid")
    spec.kind = NoiseKind::sinusoid;
  else if (kind == "decaying-sinusoid")
    spec.kind = NoiseKind::decaying_sinusoid;
  else
    throw ConfigError("noise.kind", line_of(node["kind"]), "expected none, uniform, sinusoid or decaying-sinusoid");
  if (node["amplitude"]) {
    spec.amplitude = as_real(node["amplitude"], "noise.amplitude");
    if (spec.amplitude < 0.0) throw ConfigError("noise.amplitude", line_of(node["amplitude"]), "must be >= 0");
  }
  if (node["frequency"]) spec.frequency = as_real(node["frequency"], "noise.frequency");
  if (node["decay"]) {
    spec.decay = as_real(node["decay"], "noise.decay");
    if (spec.decay < 0.0) throw ConfigError("noise.decay", line_of(node["decay"]), "must be >= 0");
  }
  if (node["seed"]) spec.seed = static_cast<std::uint64_t>(as_int(node["seed"], "noise.seed"));
  return spec;
}

inline SweepSpec parse_sweep(const YAML::Node& node, const NoiseSpec& noise) {
  SweepSpec s;
  only_keys(node, "sweep",
            {"kind", "amplitudes", "seeds", "epsilon", "ceiling", "floor_ratio", "bisection_steps", "tail_factor",
             "negative_control"});
  const std::string kind = node["kind"] ? as_str(node["kind"], "sweep.kind") : "bibo";
  if (kind == "bibo")
    s.kind = SweepKind::bibo;
  else if (kind == "cico")
    s.kind = SweepKind::cico;
  else if (kind == "margin")
    s.kind = SweepKind::margin;
  else
    throw ConfigError("sweep.kind", line_of(node["kind"]), "expected bibo, cico or margin");

  if (node["amplitudes"]) {
    const Vec a = as_vec(node["amplitudes"], "sweep.amplitudes");
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a(i) < 0.0) throw ConfigError("sweep.amplitudes", line_of(node["amplitudes"]), "amplitudes must be >= 0");
      s.amplitudes.push_back(a(i));
    }
  }
  if (s.kind == SweepKind::bibo && s.amplitudes.empty())
    throw ConfigError("sweep.amplitudes", line_of(node["amplitudes"] ? node["amplitudes"] : node),
                      "a bibo sweep needs at least one amplitude");
  if (node["seeds"]) {
    const YAML::Node seeds = node["seeds"];
    if (!seeds.IsSequence()) throw ConfigError("sweep.seeds", line_of(seeds), "expected a list of integers");
    for (std::size_t i = 0; i < seeds.size(); ++i)
      s.seeds.push_back(static_cast<std::uint64_t>(as_int(seeds[i], "sweep.seeds[" + std::to_string(i) + "]")));
  }
  if (node["epsilon"]) s.epsilon = as_real(node["epsilon"], "sweep.epsilon");
  if (s.kind == SweepKind::margin && !(s.epsilon > 0.0))
    throw ConfigError("sweep.epsilon", line_of(node["epsilon"] ? node["epsilon"] : node), "a margin search needs epsilon > 0");
  if (node["ceiling"]) s.ceiling = as_real(node["ceiling"], "sweep.ceiling");
  if (!(s.ceiling > 0.0)) throw ConfigError("sweep.ceiling", line_of(node["ceiling"]), "must be > 0");
  if (node["floor_ratio"]) s.floor_ratio = as_real(node["floor_ratio"], "sweep.floor_ratio");
  if (!(s.floor_ratio > 0.0 && s.floor_ratio < 1.0))
    throw ConfigError("sweep.floor_ratio", line_of(node["floor_ratio"]), "must lie in (0, 1)");
  if (node["bisection_steps"]) {
    const auto steps = as_int(node["bisection_steps"], "sweep.bisection_steps");
    if (steps < 0 || steps > 64) throw ConfigError("sweep.bisection_steps", line_of(node["bisection_steps"]), "must be in [0, 64]");
    s.bisection_steps = static_cast<int>(steps);
  }
  if (node["tail_factor"]) s.tail_factor = as_real(node["tail_factor"], "sweep.tail_factor");
  if (!(s.tail_factor > 0.0)) throw ConfigError("sweep.tail_factor", line_of(node["tail_factor"]), "must be > 0");
  if (node["negative_control"]) s.negative_control = as_bool(node["negative_control"], "sweep.negative_control");

  if (s.kind == SweepKind::cico) {
    if (noise.kind != NoiseKind::decaying_sinusoid)
      throw ConfigError("noise.kind", 0, "a cico sweep needs decaying-sinusoid noise");
    if (!(noise.decay > 0.0)) throw ConfigError("noise.decay", 0, "a cico sweep needs decay > 0");
  }
  return s;
}

}  // namespace detail

/// Parses and validates a configuration document.
inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("<document>", e.mark.line >= 0 ? e.mark.line + 1 : 0, e.msg);
  }
  if (!root || root.IsNull()) throw ConfigError("<document>", 0, "empty document");
  detail::only_keys(root, "",
                    {"model", "x0", "y0", "z0", "w0", "input", "grid", "r", "tol", "observer", "noise", "sweep", "check",
                     "output", "seed"});

  ExperimentConfig cfg;
  if (!root["model"]) throw ConfigError("model", 0, "missing");
  detail::parse_model(root["model"], cfg);
  const int n = cfg.model.n;
  const int k = cfg.model.k;

  if (!root["x0"]) throw ConfigError("x0", 0, "missing");
  cfg.x0 = detail::as_vec(root["x0"], "x0");
  detail::expect_dim(cfg.x0, n, "x0", root["x0"]);
  cfg.y0 = root["y0"] ? detail::as_vec(root["y0"], "y0") : Vec::Zero(k);
  if (root["y0"]) detail::expect_dim(cfg.y0, k, "y0", root["y0"]);
  cfg.z0 = root["z0"] ? detail::as_vec(root["z0"], "z0") : Vec::Zero(n);
  if (root["z0"]) detail::expect_dim(cfg.z0, n, "z0", root["z0"]);
  cfg.w0 = root["w0"] ? detail::as_vec(root["w0"], "w0") : Vec::Zero(k);
  if (root["w0"]) detail::expect_dim(cfg.w0, k, "w0", root["w0"]);

  detail::parse_input(root["input"], cfg);

  if (!root["grid"]) throw ConfigError("grid", 0, "missing");
  const YAML::Node grid = root["grid"];
  detail::only_keys(grid, "grid", {"h_s", "T"});
  if (grid["h_s"]) cfg.h_s = detail::as_real(grid["h_s"], "grid.h_s");
  if (!(cfg.h_s > 0.0)) throw ConfigError("grid.h_s", detail::line_of(grid["h_s"]), "must be > 0");
  if (!grid["T"]) throw ConfigError("grid.T", detail::line_of(grid), "missing");
  cfg.T = detail::as_real(grid["T"], "grid.T");
  if (!detail::is_multiple(cfg.T, 2.0 * cfg.h_s))
    throw ConfigError("grid.T", detail::line_of(grid["T"]), "T must be a positive whole number of macro steps 2*h_s");

  if (!root["r"]) throw ConfigError("r", 0, "missing");
  cfg.r = detail::as_real(root["r"], "r");
  if (!detail::is_multiple(cfg.r, 2.0 * cfg.h_s))
    throw ConfigError("r", detail::line_of(root["r"]), "r must be a positive integer multiple of the macro step 2*h_s");
  if (cfg.T < cfg.r) throw ConfigError("grid.T", detail::line_of(grid["T"]), "T must be >= r");

  if (root["tol"]) {
    cfg.tol = detail::as_real(root["tol"], "tol");
    if (!(cfg.tol > 0.0)) throw ConfigError("tol", detail::line_of(root["tol"]), "must be > 0");
  }

  if (root["observer"]) {
    const YAML::Node obs = root["observer"];
    detail::only_keys(obs, "observer", {"mode", "on_failure"});
    if (obs["mode"]) {
      const auto mode = detail::as_str(obs["mode"], "observer.mode");
      if (mode == "reduced")
        cfg.mode = ObserverMode::reduced_order;
      else if (mode == "full")
        cfg.mode = ObserverMode::full_order;
      else
        throw ConfigError("observer.mode", detail::line_of(obs["mode"]), "expected reduced or full");
    }
    if (obs["on_failure"]) {
      const auto pol = detail::as_str(obs["on_failure"], "observer.on_failure");
      if (pol == "abort")
        cfg.on_failure = FailurePolicy::abort;
      else if (pol == "hold")
        cfg.on_failure = FailurePolicy::hold;
      else
        throw ConfigError("observer.on_failure", detail::line_of(obs["on_failure"]), "expected abort or hold");
    }
  }

  std::uint64_t seed = 0;
  if (root["seed"]) seed = static_cast<std::uint64_t>(detail::as_int(root["seed"], "seed"));
  cfg.noise = detail::parse_noise(root["noise"], seed);
  if (root["sweep"]) cfg.sweep = detail::parse_sweep(root["sweep"], cfg.noise);

  if (root["check"]) {
    const YAML::Node check = root["check"];
    detail::only_keys(check, "check", {"window_start"});
    if (check["window_start"]) {
      cfg.check_window_start = detail::as_real(check["window_start"], "check.window_start");
      const double ws = cfg.check_window_start;
      if (ws < 0.0 || (ws > 0.0 && !detail::is_multiple(ws, cfg.h_s)) || ws + cfg.r > cfg.T + kGridSnapTolerance * cfg.h_s)
        throw ConfigError("check.window_start", detail::line_of(check["window_start"]),
                          "window must start on a grid node and fit inside [0, T]");
    }
  }

  if (root["output"]) {
    const YAML::Node out = root["output"];
    detail::only_keys(out, "output", {"dir", "name"});
    if (out["dir"]) cfg.output_dir = detail::as_str(out["dir"], "output.dir");
    if (out["name"]) cfg.output_name = detail::as_str(out["name"], "output.name");
  }
  return cfg;
}

/// Samples the configured input on the experiment grid.
inline Signal make_input(const ExperimentConfig& cfg) {
  const SampleGrid grid = cfg.grid();
  const InputSpec& in = cfg.input;
  Signal u(grid, cfg.model.m);
  for (std::size_t j = 0; j < grid.count; ++j) {
    const double t = grid.time(j);
    switch (in.kind) {
      case InputKind::constant:
        u.set_node(j, in.value);
        break;
      case InputKind::sinusoid:
        u.set_node(j, in.offset + in.amplitude * std::sin(in.frequency * t));
        break;
      case InputKind::table: {
        Vec v = in.table.front().second;
        for (const auto& [ts, val] : in.table)
          if (ts <= t + kGridSnapTolerance * grid.h_s) v = val;
        u.set_node(j, v);
        break;
      }
    }
  }
  return u;
}

inline ExperimentSetup make_setup(const ExperimentConfig& cfg) {
  ExperimentSetup setup;
  setup.model = cfg.model;
  setup.x0 = cfg.x0;
  setup.y0 = cfg.y0;
  setup.u = make_input(cfg);
  setup.r = cfg.r;
  setup.T = cfg.T;
  setup.options = {cfg.tol, cfg.on_failure};
  return setup;
}

}  // namespace deadbeat::app
