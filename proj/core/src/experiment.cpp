#include "nhtl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nhtl/csv.hpp"
#include "nhtl/dynamics.hpp"
#include "nhtl/localizer.hpp"
#include "nhtl/nonlinear_modes.hpp"
#include "nhtl/parallel.hpp"
#include "nhtl/rng.hpp"

namespace nhtl {

using nlohmann::json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::spectrum_vs_intensity: return "spectrum_vs_intensity";
    case ExperimentKind::tzm_profile: return "tzm_profile";
    case ExperimentKind::design_profile: return "design_profile";
    case ExperimentKind::localizer_scan: return "localizer_scan";
    case ExperimentKind::pump_evolve: return "pump_evolve";
    case ExperimentKind::steady_sweep: return "steady_sweep";
    case ExperimentKind::noise_ensemble: return "noise_ensemble";
    case ExperimentKind::disorder_ensemble: return "disorder_ensemble";
    case ExperimentKind::lattice2d_modes: return "lattice2d_modes";
    case ExperimentKind::long_range_compare: return "long_range_compare";
  }
  throw std::invalid_argument("unknown experiment kind");
}

namespace {

const std::map<std::string, ExperimentKind>& kind_table() {
  static const std::map<std::string, ExperimentKind> table = {
      {"spectrum_vs_intensity", ExperimentKind::spectrum_vs_intensity},
      {"tzm_profile", ExperimentKind::tzm_profile},
      {"design_profile", ExperimentKind::design_profile},
      {"localizer_scan", ExperimentKind::localizer_scan},
      {"pump_evolve", ExperimentKind::pump_evolve},
      {"steady_sweep", ExperimentKind::steady_sweep},
      {"noise_ensemble", ExperimentKind::noise_ensemble},
      {"disorder_ensemble", ExperimentKind::disorder_ensemble},
      {"lattice2d_modes", ExperimentKind::lattice2d_modes},
      {"long_range_compare", ExperimentKind::long_range_compare},
  };
  return table;
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

class Checker {
 public:
  explicit Checker(std::vector<ValidationError>* errors) : errors_(errors) {}

  void add(const std::string& path, const std::string& message) {
    errors_->push_back({path, message});
  }

  void unknown_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key())) add(path + "/" + it.key(), "unknown field");
  }

  bool require(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) {
      add(path + "/" + key, "required field missing");
      return false;
    }
    return true;
  }

  bool number(const json& obj, const std::string& path, const char* key, bool required,
              double* out = nullptr) {
    if (!obj.contains(key)) {
      if (required) add(path + "/" + key, "required field missing");
      return false;
    }
    if (!obj.at(key).is_number()) {
      add(path + "/" + key, "must be a number");
      return false;
    }
    if (out) *out = obj.at(key).get<double>();
    return true;
  }

  bool positive_number(const json& obj, const std::string& path, const char* key, bool required) {
    double v = 0;
    if (!number(obj, path, key, required, &v)) return false;
    if (!(v > 0)) {
      add(path + "/" + key, "must be positive");
      return false;
    }
    return true;
  }

  bool integer(const json& obj, const std::string& path, const char* key, bool required,
               long long lo = std::numeric_limits<long long>::min()) {
    if (!obj.contains(key)) {
      if (required) add(path + "/" + key, "required field missing");
      return false;
    }
    if (!obj.at(key).is_number_integer()) {
      add(path + "/" + key, "must be an integer");
      return false;
    }
    if (obj.at(key).get<long long>() < lo) {
      add(path + "/" + key, "must be >= " + std::to_string(lo));
      return false;
    }
    return true;
  }

  bool boolean(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) return false;
    if (!obj.at(key).is_boolean()) {
      add(path + "/" + key, "must be a boolean");
      return false;
    }
    return true;
  }

  // ascending positive numeric array
  bool grid(const json& obj, const std::string& path, const char* key, bool required,
            bool need_ascending = true) {
    if (!obj.contains(key)) {
      if (required) add(path + "/" + key, "required field missing");
      return false;
    }
    const auto& arr = obj.at(key);
    if (!arr.is_array() || arr.empty()) {
      add(path + "/" + key, "must be a nonempty array of numbers");
      return false;
    }
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) {
        add(path + "/" + key + "/" + std::to_string(i), "must be a number");
        return false;
      }
      const double v = arr[i].get<double>();
      if (need_ascending && !(v > prev)) {
        add(path + "/" + key + "/" + std::to_string(i), "grid must be strictly ascending");
        return false;
      }
      prev = v;
    }
    return true;
  }

  std::vector<ValidationError>* errors_;
};

const std::set<std::string> kSpecKeys = {"n_hermitian_cells", "n_sites", "tau", "t_bar", "alpha",
                                         "j_hop", "delta", "lambda_bar", "beta", "t_d"};
const std::set<std::string> kSpec2DKeys = {"chain_spec", "l_x", "l_y", "u0",
                                           "v0", "gamma1", "sign_pattern"};

bool validate_spec1d(const json& obj, const std::string& path, Checker& check,
                     LatticeSpec1D* out = nullptr) {
  if (!obj.is_object()) {
    check.add(path, "must be an object");
    return false;
  }
  check.unknown_keys(obj, path, kSpecKeys);
  bool ok = true;
  for (const char* key : {"n_hermitian_cells", "n_sites"}) ok &= check.integer(obj, path, key, true, 1);
  for (const char* key : {"tau", "alpha", "j_hop", "delta", "beta", "t_d"})
    ok &= check.number(obj, path, key, true);
  for (const char* key : {"t_bar", "lambda_bar"}) {
    if (!check.require(obj, path, key)) {
      ok = false;
    } else if (!obj.at(key).is_number() && !obj.at(key).is_array()) {
      check.add(path + "/" + std::string(key), "must be a number or an array of numbers");
      ok = false;
    }
  }
  if (!ok) return false;
  try {
    const LatticeSpec1D spec = LatticeSpec1D::from_json(obj);
    if (out) *out = spec;
  } catch (const std::exception& e) {
    check.add(path, e.what());
    return false;
  }
  return true;
}

bool validate_spec2d(const json& obj, const std::string& path, Checker& check,
                     LatticeSpec2D* out = nullptr) {
  if (!obj.is_object()) {
    check.add(path, "must be an object");
    return false;
  }
  check.unknown_keys(obj, path, kSpec2DKeys);
  bool ok = check.require(obj, path, "chain_spec");
  if (ok) ok &= validate_spec1d(obj.at("chain_spec"), path + "/chain_spec", check);
  for (const char* key : {"l_x", "l_y"}) ok &= check.integer(obj, path, key, true, 1);
  for (const char* key : {"u0", "v0", "gamma1"}) ok &= check.number(obj, path, key, true);
  if (!ok) return false;
  try {
    const LatticeSpec2D spec = LatticeSpec2D::from_json(obj);
    if (out) *out = spec;
  } catch (const std::exception& e) {
    check.add(path, e.what());
    return false;
  }
  return true;
}

const std::set<std::string> kPumpKeys = {"type", "m", "path", "values"};

bool validate_pump_source(const json& obj, const std::string& path, Checker& check) {
  if (!obj.is_object()) {
    check.add(path, "must be an object");
    return false;
  }
  check.unknown_keys(obj, path, kPumpKeys);
  if (!check.require(obj, path, "type")) return false;
  const std::string type = obj.at("type").is_string() ? obj.at("type").get<std::string>() : "";
  if (type == "single_site") return check.integer(obj, path, "m", true, 1);
  if (type == "profile_file") return check.require(obj, path, "path");
  if (type == "profile") return check.grid(obj, path, "values", true, false);
  check.add(path + "/type", "must be one of single_site, profile_file, profile");
  return false;
}

void validate_shapes(const json& cfg, const std::string& path, Checker& check) {
  if (!cfg.contains("shapes")) {
    check.add(path + "/shapes", "required field missing");
    return;
  }
  const auto& shapes = cfg.at("shapes");
  if (!shapes.is_array() || shapes.empty()) {
    check.add(path + "/shapes", "must be a nonempty array");
    return;
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string p = path + "/shapes/" + std::to_string(i);
    const auto& s = shapes[i];
    if (s.is_string()) {
      try {
        if (profile_shape_from_string(s.get<std::string>()) == ProfileShape::custom)
          check.add(p, "custom targets must be objects with a samples array");
      } catch (const std::exception& e) {
        check.add(p, e.what());
      }
    } else if (s.is_object()) {
      check.unknown_keys(s, p, {"shape", "samples"});
      if (!s.contains("shape") || !s.contains("samples"))
        check.add(p, "custom target needs shape and samples");
    } else {
      check.add(p, "must be a shape name or a custom target object");
    }
  }
}

}  // namespace

ValidatedConfig validate_config(const json& raw) {
  ValidatedConfig out;
  Checker check(&out.errors);

  if (!raw.is_object()) {
    check.add("", "configuration must be a JSON object");
    return out;
  }
  if (!raw.contains("experiment") || !raw.at("experiment").is_string()) {
    check.add("/experiment", "required string field");
    return out;
  }
  const std::string name = raw.at("experiment").get<std::string>();
  const auto it = kind_table().find(name);
  if (it == kind_table().end()) {
    check.add("/experiment", "unknown experiment: " + name);
    return out;
  }
  const ExperimentKind kind = it->second;

  std::set<std::string> allowed = {"experiment", "seed", "threads", "output_dir"};
  const auto common_checks = [&] {
    if (raw.contains("seed")) check.integer(raw, "", "seed", false, 0);
    if (raw.contains("threads")) check.integer(raw, "", "threads", false, 0);
    if (raw.contains("output_dir") && !raw.at("output_dir").is_string())
      check.add("/output_dir", "must be a string");
  };

  LatticeSpec1D spec1d;
  bool spec_ok = false;
  const auto need_spec = [&] {
    allowed.insert("spec");
    if (check.require(raw, "", "spec"))
      spec_ok = validate_spec1d(raw.at("spec"), "/spec", check, &spec1d);
  };

  switch (kind) {
    case ExperimentKind::spectrum_vs_intensity: {
      need_spec();
      allowed.insert({"intensity_grid", "sweep", "profile_snapshots", "tol", "max_iter",
                      "full_spectrum"});
      check.grid(raw, "", "intensity_grid", true);
      if (raw.contains("sweep")) {
        const auto& sweep = raw.at("sweep");
        if (!sweep.is_array() || sweep.empty()) {
          check.add("/sweep", "must be a nonempty array of override objects");
        } else {
          const std::set<std::string> overridable = {"delta", "beta", "alpha", "tau",
                                                     "t_d", "j_hop", "t_bar", "lambda_bar"};
          for (std::size_t i = 0; i < sweep.size(); ++i) {
            const std::string p = "/sweep/" + std::to_string(i);
            if (!sweep[i].is_object()) {
              check.add(p, "must be an object");
              continue;
            }
            check.unknown_keys(sweep[i], p, overridable);
            for (auto f = sweep[i].begin(); f != sweep[i].end(); ++f)
              if (!f.value().is_number()) check.add(p + "/" + f.key(), "must be a number");
          }
        }
      }
      if (raw.contains("profile_snapshots") && check.grid(raw, "", "profile_snapshots", false)) {
        if (raw.contains("intensity_grid") && raw.at("intensity_grid").is_array()) {
          const auto grid = raw.at("intensity_grid").get<std::vector<double>>();
          const auto snaps = raw.at("profile_snapshots").get<std::vector<double>>();
          for (std::size_t i = 0; i < snaps.size(); ++i)
            if (std::find(grid.begin(), grid.end(), snaps[i]) == grid.end())
              check.add("/profile_snapshots/" + std::to_string(i),
                        "snapshot intensity must be a member of intensity_grid");
        }
      }
      if (raw.contains("tol")) check.positive_number(raw, "", "tol", false);
      if (raw.contains("max_iter")) check.integer(raw, "", "max_iter", false, 1);
      if (raw.contains("full_spectrum")) check.boolean(raw, "", "full_spectrum");
      break;
    }
    case ExperimentKind::tzm_profile: {
      need_spec();
      allowed.insert({"intensities", "boundary_amplitudes"});
      if (!raw.contains("intensities") && !raw.contains("boundary_amplitudes"))
        check.add("/intensities", "need intensities and/or boundary_amplitudes");
      if (raw.contains("intensities")) check.grid(raw, "", "intensities", true);
      if (raw.contains("boundary_amplitudes")) check.grid(raw, "", "boundary_amplitudes", true);
      break;
    }
    case ExperimentKind::design_profile: {
      need_spec();
      allowed.insert({"shapes"});
      validate_shapes(raw, "", check);
      break;
    }
    case ExperimentKind::localizer_scan: {
      need_spec();
      allowed.insert({"intensities", "eta", "x_grid", "state_source", "locate_closures"});
      check.grid(raw, "", "intensities", true);
      if (raw.contains("eta")) check.positive_number(raw, "", "eta", false);
      if (raw.contains("x_grid")) check.grid(raw, "", "x_grid", false);
      if (raw.contains("state_source")) {
        const auto& s = raw.at("state_source");
        if (!s.is_string() || (s != "solver" && s != "recursion"))
          check.add("/state_source", "must be \"solver\" or \"recursion\"");
      }
      if (raw.contains("locate_closures")) check.boolean(raw, "", "locate_closures");
      if (spec_ok && std::abs(spec1d.j_hop) == std::abs(spec1d.delta))
        check.add("/spec/delta",
                  "similarity transform is singular at |j_hop| = |delta|; the localizer scan "
                  "cannot run there");
      break;
    }
    case ExperimentKind::pump_evolve: {
      need_spec();
      allowed.insert({"pump", "xi", "omega_tilde", "kappa_a", "kappa_b", "t_end", "dt",
                      "store_stride", "stop_when_steady"});
      if (check.require(raw, "", "pump")) validate_pump_source(raw.at("pump"), "/pump", check);
      check.number(raw, "", "xi", true);
      check.number(raw, "", "kappa_a", true);
      check.number(raw, "", "kappa_b", true);
      check.positive_number(raw, "", "t_end", true);
      if (raw.contains("dt")) check.positive_number(raw, "", "dt", false);
      if (raw.contains("omega_tilde")) check.number(raw, "", "omega_tilde", false);
      if (raw.contains("store_stride")) check.integer(raw, "", "store_stride", false, 1);
      if (raw.contains("stop_when_steady")) check.boolean(raw, "", "stop_when_steady");
      break;
    }
    case ExperimentKind::steady_sweep: {
      need_spec();
      allowed.insert({"pump", "xi_grid", "omega_tilde", "kappa_a", "kappa_b", "tol",
                      "verify_evolve", "t_end", "dt", "profile_xis"});
      if (check.require(raw, "", "pump")) validate_pump_source(raw.at("pump"), "/pump", check);
      check.grid(raw, "", "xi_grid", true);
      check.number(raw, "", "kappa_a", true);
      check.number(raw, "", "kappa_b", true);
      if (raw.contains("omega_tilde")) check.number(raw, "", "omega_tilde", false);
      if (raw.contains("tol")) check.positive_number(raw, "", "tol", false);
      if (raw.contains("verify_evolve")) check.boolean(raw, "", "verify_evolve");
      if (raw.contains("t_end")) check.positive_number(raw, "", "t_end", false);
      if (raw.contains("dt")) check.positive_number(raw, "", "dt", false);
      if (raw.contains("profile_xis")) check.grid(raw, "", "profile_xis", false);
      break;
    }
    case ExperimentKind::noise_ensemble: {
      need_spec();
      allowed.insert({"pump", "xi", "omega_tilde", "kappa_a", "kappa_b", "n_realizations",
                      "noise_range", "complex_noise", "t_end", "dt", "sample_stride"});
      if (check.require(raw, "", "pump")) validate_pump_source(raw.at("pump"), "/pump", check);
      check.number(raw, "", "xi", true);
      check.number(raw, "", "kappa_a", true);
      check.number(raw, "", "kappa_b", true);
      check.integer(raw, "", "n_realizations", true, 1);
      check.positive_number(raw, "", "t_end", true);
      if (raw.contains("noise_range")) {
        const auto& r = raw.at("noise_range");
        if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number() ||
            !(r[0].get<double>() < r[1].get<double>()))
          check.add("/noise_range", "must be [lo, hi] with lo < hi");
      }
      if (raw.contains("complex_noise")) check.boolean(raw, "", "complex_noise");
      if (raw.contains("dt")) check.positive_number(raw, "", "dt", false);
      if (raw.contains("sample_stride")) check.integer(raw, "", "sample_stride", false, 1);
      if (raw.contains("omega_tilde")) check.number(raw, "", "omega_tilde", false);
      break;
    }
    case ExperimentKind::disorder_ensemble: {
      need_spec();
      allowed.insert({"shapes", "disorder", "n_seeds", "eta"});
      validate_shapes(raw, "", check);
      check.integer(raw, "", "n_seeds", true, 1);
      if (raw.contains("eta")) check.positive_number(raw, "", "eta", false);
      if (check.require(raw, "", "disorder")) {
        const auto& d = raw.at("disorder");
        if (!d.is_object()) {
          check.add("/disorder", "must be an object");
        } else {
          check.unknown_keys(d, "/disorder", {"kind", "strength"});
          if (check.require(d, "/disorder", "kind")) {
            try {
              disorder_kind_from_string(d.at("kind").get<std::string>());
            } catch (const std::exception& e) {
              check.add("/disorder/kind", e.what());
            }
          }
          double s = 0;
          if (check.number(d, "/disorder", "strength", true, &s) && s < 0)
            check.add("/disorder/strength", "must be >= 0");
        }
      }
      break;
    }
    case ExperimentKind::lattice2d_modes: {
      allowed.insert({"spec2d", "gamma1_values", "intensity_grid", "profile_snapshots", "tol",
                      "max_iter"});
      if (check.require(raw, "", "spec2d"))
        validate_spec2d(raw.at("spec2d"), "/spec2d", check);
      check.grid(raw, "", "intensity_grid", true);
      if (raw.contains("gamma1_values")) {
        const auto& g = raw.at("gamma1_values");
        if (!g.is_array() || g.empty()) {
          check.add("/gamma1_values", "must be a nonempty array of numbers >= 0");
        } else {
          for (std::size_t i = 0; i < g.size(); ++i)
            if (!g[i].is_number() || g[i].get<double>() < 0)
              check.add("/gamma1_values/" + std::to_string(i), "must be a number >= 0");
        }
      }
      if (raw.contains("profile_snapshots")) check.grid(raw, "", "profile_snapshots", false);
      if (raw.contains("tol")) check.positive_number(raw, "", "tol", false);
      if (raw.contains("max_iter")) check.integer(raw, "", "max_iter", false, 1);
      break;
    }
    case ExperimentKind::long_range_compare: {
      allowed.insert({"spec_hermitian", "spec_nonhermitian", "xi_grid", "kappa_a", "kappa_b",
                      "omega_tilde", "pump_site_m", "t_end", "dt", "rel_tol", "margin_cells"});
      LatticeSpec1D sh, sn;
      bool ok_h = false, ok_n = false;
      if (check.require(raw, "", "spec_hermitian"))
        ok_h = validate_spec1d(raw.at("spec_hermitian"), "/spec_hermitian", check, &sh);
      if (check.require(raw, "", "spec_nonhermitian"))
        ok_n = validate_spec1d(raw.at("spec_nonhermitian"), "/spec_nonhermitian", check, &sn);
      if (ok_h && ok_n && sh.n_sites != sn.n_sites)
        check.add("/spec_nonhermitian/n_sites", "both lattices must share n_sites");
      check.grid(raw, "", "xi_grid", true);
      check.number(raw, "", "kappa_a", true);
      check.number(raw, "", "kappa_b", true);
      if (raw.contains("omega_tilde")) check.number(raw, "", "omega_tilde", false);
      if (raw.contains("pump_site_m")) check.integer(raw, "", "pump_site_m", false, 1);
      if (raw.contains("t_end")) check.positive_number(raw, "", "t_end", false);
      if (raw.contains("dt")) check.positive_number(raw, "", "dt", false);
      if (raw.contains("rel_tol")) check.positive_number(raw, "", "rel_tol", false);
      if (raw.contains("margin_cells")) check.integer(raw, "", "margin_cells", false, 0);
      break;
    }
  }

  common_checks();
  check.unknown_keys(raw, "", allowed);

  out.ok = out.errors.empty();
  if (out.ok) {
    out.config.kind = kind;
    out.config.raw = raw;
  }
  return out;
}

// ---------------------------------------------------------------------------
// recipes
// ---------------------------------------------------------------------------

namespace {

json spec_json(int n, int l, double tau, double t_bar, double alpha, double j, double delta,
               double lambda_bar, double beta, double t_d) {
  return json{{"n_hermitian_cells", n}, {"n_sites", l},          {"tau", tau},
              {"t_bar", t_bar},         {"alpha", alpha},        {"j_hop", j},
              {"delta", delta},         {"lambda_bar", lambda_bar}, {"beta", beta},
              {"t_d", t_d}};
}

json amplitude_grid(std::initializer_list<double> amplitudes) {
  json grid = json::array();
  for (double a : amplitudes) grid.push_back(a * a);
  return grid;
}

const json kIntensityGridA = amplitude_grid(
    {1, 4, 5, 7, 10, 13, 16, 19, 22, 25, 28, 30, 31, 32, 34, 37, 40, 43, 46, 50});

}  // namespace

std::vector<std::string> recipe_names() {
  return {"fig2", "fig3", "fig4", "fig5b", "fig5d", "fig5f", "fig6", "figs5", "figs6", "figs10"};
}

json recipe_preset(const std::string& name) {
  const json spec_a = spec_json(31, 121, 2.5, 1.0, 0.05, 1.5, 0.5, 2.5, 0.0, 2.5);
  const json spec_b = spec_json(31, 121, 2.5, 1.5, 0.05, 1.5, 1.0, 1.5, 0.05, 2.5);

  if (name == "fig2")
    return json{{"experiment", "spectrum_vs_intensity"},
                {"spec", spec_a},
                {"sweep", json::array({json{{"delta", 0.5}}, json{{"delta", 1.0}},
                                       json{{"delta", 1.5}}})},
                {"intensity_grid", kIntensityGridA},
                {"profile_snapshots", json::array({25.0, 1024.0, 1849.0, 2500.0})},
                {"seed", 1}};
  if (name == "fig3")
    return json{{"experiment", "spectrum_vs_intensity"},
                {"spec", spec_b},
                {"sweep", json::array({json{{"delta", 1.0}, {"beta", 0.05}},
                                       json{{"delta", 1.5}, {"beta", 0.075}}})},
                {"intensity_grid", kIntensityGridA},
                {"profile_snapshots", json::array({25.0, 900.0, 1849.0})},
                {"seed", 1}};
  if (name == "fig4")
    return json{{"experiment", "localizer_scan"},
                {"spec", spec_b},
                {"intensities", json::array({25.0, 900.0, 1849.0})},
                {"eta", 0.2},
                {"state_source", "solver"},
                {"seed", 1}};
  if (name == "fig5b")
    return json{{"experiment", "steady_sweep"},
                {"spec", spec_b},
                {"pump", json{{"type", "single_site"}, {"m", 1}}},
                {"xi_grid",
                 json::array({0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0,
                              3.25, 3.5, 3.75, 4.0, 4.25, 4.5, 4.75, 5.0})},
                {"kappa_a", 0.01},
                {"kappa_b", 0.5},
                {"omega_tilde", 0.0},
                {"verify_evolve", true},
                {"t_end", 800.0},
                {"dt", 0.005},
                {"profile_xis", json::array({1.0, 2.5, 5.0})},
                {"seed", 1}};
  if (name == "fig5d")
    return json{{"experiment", "pump_evolve"},
                {"spec", spec_b},
                {"pump", json{{"type", "single_site"}, {"m", 1}}},
                {"xi", 2.5},
                {"omega_tilde", 0.0},
                {"kappa_a", 0.01},
                {"kappa_b", 0.5},
                {"t_end", 800.0},
                {"dt", 0.005},
                {"stop_when_steady", true},
                {"seed", 1}};
  if (name == "fig5f")
    return json{{"experiment", "noise_ensemble"},
                {"spec", spec_b},
                {"pump", json{{"type", "single_site"}, {"m", 1}}},
                {"xi", 2.5},
                {"omega_tilde", 0.0},
                {"kappa_a", 0.01},
                {"kappa_b", 0.5},
                {"n_realizations", 200},
                {"noise_range", json::array({-3.0, 3.0})},
                {"t_end", 400.0},
                {"dt", 0.005},
                {"seed", 1}};
  if (name == "fig6")
    return json{{"experiment", "lattice2d_modes"},
                {"spec2d", json{{"chain_spec", spec_json(6, 21, 2.5, 1.5, 0.05, 1.5, 1.2, 1.5,
                                                         0.05, 2.5)},
                                {"l_x", 21},
                                {"l_y", 21},
                                {"u0", 0.2},
                                {"v0", 0.4},
                                {"gamma1", 0.0}}},
                {"gamma1_values", json::array({0.0, 0.01})},
                {"intensity_grid",
                 amplitude_grid({1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50})},
                {"profile_snapshots", json::array({25.0, 400.0, 2500.0})},
                {"seed", 1}};
  if (name == "figs5")
    return json{{"experiment", "design_profile"},
                {"spec", spec_b},
                {"shapes", json::array({"flat", "square", "triangle", "cosine"})},
                {"seed", 1}};
  if (name == "figs6")
    return json{{"experiment", "disorder_ensemble"},
                {"spec", spec_b},
                {"shapes", json::array({"flat", "square", "triangle", "cosine"})},
                {"disorder", json{{"kind", "multiplicative_hopping"}, {"strength", 0.2}}},
                {"n_seeds", 100},
                {"eta", 0.2},
                {"seed", 1}};
  if (name == "figs10")
    return json{{"experiment", "long_range_compare"},
                {"spec_hermitian", spec_json(61, 245, 2.5, 1.5, 0.05, 1.5, 0.0, 2.5, 0.0, 2.5)},
                {"spec_nonhermitian", spec_json(61, 245, 2.5, 1.5, 0.05, 1.5, 1.0, 1.5, 0.05, 2.5)},
                {"xi_grid", json::array({0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 22.0, 28.0})},
                {"kappa_a", 0.01},
                {"kappa_b", 0.5},
                {"omega_tilde", 0.0},
                {"pump_site_m", 1},
                {"t_end", 2000.0},
                {"dt", 0.005},
                {"seed", 1}};
  throw std::invalid_argument("unknown recipe: " + name +
                              " (available: fig2 fig3 fig4 fig5b fig5d fig5f fig6 figs5 figs6 "
                              "figs10)");
}

json merge_config(json base, const json& overrides) {
  if (!overrides.is_object() || !base.is_object()) return overrides;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (base.contains(it.key()) && base.at(it.key()).is_object() && it.value().is_object())
      base[it.key()] = merge_config(base.at(it.key()), it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

std::uint64_t config_hash(const json& resolved) {
  json stripped = resolved;
  stripped.erase("output_dir");
  stripped.erase("threads");
  const std::string dump = stripped.dump();
  return fnv1a64(dump.data(), dump.size());
}

// ---------------------------------------------------------------------------
// runners
// ---------------------------------------------------------------------------

namespace {

struct RunContext {
  std::filesystem::path dir;
  std::vector<std::string> comments;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> file_names;
  json summary = json::object();
  bool numerical_failure = false;

  std::filesystem::path file(const std::string& name) {
    file_names.push_back(name);
    return dir / name;
  }
};

std::string short_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

std::string label_of(const json& overrides) {
  if (overrides.empty()) return "base";
  std::string label;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (!label.empty()) label += "_";
    label += it.key() + short_double(it.value().get<double>());
  }
  return label;
}

LatticeSpec1D apply_overrides(LatticeSpec1D spec, const json& overrides) {
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const double v = it.value().get<double>();
    const std::string& key = it.key();
    if (key == "delta") spec.delta = v;
    else if (key == "beta") spec.beta = v;
    else if (key == "alpha") spec.alpha = v;
    else if (key == "tau") spec.tau = v;
    else if (key == "t_d") spec.t_d = v;
    else if (key == "j_hop") spec.j_hop = v;
    else if (key == "t_bar") spec.t_bar.assign(spec.t_bar.size(), v);
    else if (key == "lambda_bar") spec.lambda_bar.assign(spec.lambda_bar.size(), v);
    else throw std::invalid_argument("unknown sweep override: " + key);
  }
  spec.validate();
  return spec;
}

PumpConfig pump_from_config(const json& cfg, const LatticeSpec1D& spec, double xi) {
  const json& p = cfg.at("pump");
  const double omega = cfg.value("omega_tilde", 0.0);
  const double ka = cfg.at("kappa_a").get<double>();
  const double kb = cfg.at("kappa_b").get<double>();
  const std::string type = p.at("type").get<std::string>();
  if (type == "single_site")
    return PumpConfig::single_site(spec, p.at("m").get<int>(), xi, omega, ka, kb);

  PumpConfig pump;
  pump.profile = ComplexVector::Zero(spec.n_sites);
  if (type == "profile") {
    const auto values = p.at("values").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != spec.n_sites)
      throw std::invalid_argument("pump profile must list one amplitude per site");
    for (int i = 0; i < spec.n_sites; ++i) pump.profile[i] = values[static_cast<std::size_t>(i)];
  } else {  // profile_file: two columns, 1-based site index and amplitude
    std::ifstream in(p.at("path").get<std::string>());
    if (!in) throw std::runtime_error("cannot open pump profile file");
    int site;
    double amp;
    while (in >> site >> amp) {
      if (site < 1 || site > spec.n_sites)
        throw std::invalid_argument("pump profile site index out of range");
      pump.profile[site - 1] = amp;
    }
  }
  pump.strength = xi;
  pump.frequency = omega;
  pump.kappa_a = ka;
  pump.kappa_b = kb;
  pump.validate(spec);
  return pump;
}

ProfileTarget shape_target(const json& entry, const LatticeSpec1D& spec) {
  if (entry.is_string())
    return make_profile_target(profile_shape_from_string(entry.get<std::string>()), spec);
  return make_profile_target(entry.at("samples").get<std::vector<double>>(), spec);
}

std::string shape_name(const json& entry, std::size_t index) {
  if (entry.is_string()) return entry.get<std::string>();
  return "custom" + std::to_string(index);
}

// --- spectrum_vs_intensity --------------------------------------------------

void run_spectrum(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D base = LatticeSpec1D::from_json(cfg.at("spec"));
  const auto grid = cfg.at("intensity_grid").get<std::vector<double>>();
  const auto snapshots = cfg.value("profile_snapshots", std::vector<double>{});
  std::vector<json> sweep;
  if (cfg.contains("sweep"))
    sweep = cfg.at("sweep").get<std::vector<json>>();
  else
    sweep.push_back(json::object());

  SolverOptions opts;
  opts.tol = cfg.value("tol", 1e-10);
  opts.max_iter = cfg.value("max_iter", 10000);
  const bool full = cfg.value("full_spectrum", true);

  for (const json& variant : sweep) {
    const std::string label = label_of(variant);
    const LatticeSpec1D spec = apply_overrides(base, variant);
    const ModeSolver solver = make_solver(spec);
    const LinearGap gap = solver.linear_gap();
    const int L = spec.n_sites;

    if (full) {
      ComplexVector omegas;
      ComplexMatrix vectors;
      solver.diagonalize(ComplexVector::Zero(L), &omegas, &vectors);
      std::vector<ComplexVector> states(static_cast<std::size_t>(L));
      std::vector<int> failures(static_cast<std::size_t>(L), 0);
      for (int k = 0; k < L; ++k) states[static_cast<std::size_t>(k)] = vectors.col(k);

      CsvWriter csv(ctx.file("spectrum_" + label + ".csv"), ctx.comments,
                    {"intensity", "branch", "re_omega", "im_omega", "residual", "converged",
                     "classification", "participation_ratio"});
      for (const double intensity : grid) {
        std::vector<Mode> modes(static_cast<std::size_t>(L));
        parallel_for(static_cast<std::size_t>(L), ctx.threads, [&](std::size_t k) {
          // branches that repeatedly refuse to converge (e.g. the defective
          // sector of exactly unidirectional hopping) get a token budget:
          // they stay in the output, flagged, without dominating the run time
          SolverOptions branch_opts = opts;
          if (failures[k] >= 2) branch_opts.max_iter = 3;
          modes[k] = solver.solve(intensity, states[k], branch_opts);
        });
        for (int k = 0; k < L; ++k) {
          const Mode& m = modes[static_cast<std::size_t>(k)];
          const ModeClass cls =
              classify_mode(m, gap, solver.hamiltonian().inf_norm(m.state));
          csv.row() << intensity << k << m.omega.real() << m.omega.imag() << m.residual
                    << static_cast<int>(m.converged) << to_string(cls)
                    << participation_ratio(m.state);
          states[static_cast<std::size_t>(k)] = m.state;
          if (!m.converged) {
            ctx.numerical_failure = true;
            ++failures[static_cast<std::size_t>(k)];
          } else {
            failures[static_cast<std::size_t>(k)] = 0;
          }
        }
      }
    }

    const BranchResult branch = trace_tzm_branch(solver, gap, grid, opts);
    if (branch.branch_lost) {
      ctx.numerical_failure = true;
      ctx.summary["branch_lost"][label] = branch.lost_index;
    }
    CsvWriter tzm(ctx.file("tzm_branch_" + label + ".csv"), ctx.comments,
                  {"intensity", "re_omega", "im_omega", "residual", "converged", "classification",
                   "participation_ratio"});
    for (std::size_t i = 0; i < branch.modes.size(); ++i) {
      const Mode& m = branch.modes[i];
      tzm.row() << branch.intensity_grid[i] << m.omega.real() << m.omega.imag() << m.residual
                << static_cast<int>(m.converged) << to_string(branch.classification[i])
                << participation_ratio(m.state);
    }
    for (const double snap : snapshots) {
      const auto it = std::find(grid.begin(), grid.end(), snap);
      const auto idx = static_cast<std::size_t>(std::distance(grid.begin(), it));
      if (idx < branch.modes.size())
        write_state_csv(ctx.file("profile_" + label + "_I" + short_double(snap) + ".csv"),
                        branch.modes[idx].state, ctx.comments);
    }
  }
}

// --- tzm_profile --------------------------------------------------------------

void run_tzm_profile(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec = LatticeSpec1D::from_json(cfg.at("spec"));
  const BondHamiltonian ham = lattice_bonds(spec);
  CsvWriter csv(ctx.file("tzm_profiles.csv"), ctx.comments,
                {"intensity", "boundary_amplitude", "rel_residual", "b_polarization",
                 "participation_ratio", "nonhermitian_weight"});

  const auto emit = [&](const ComplexVector& state, const std::string& tag) {
    const double intensity = total_intensity(state);
    const double rel_res = ham.apply(state, state).norm() / state.norm();
    double max_a = 0, max_b = 0;
    for (int i = 0; i < spec.n_sites; ++i)
      (LatticeSpec1D::is_a_site(i) ? max_a : max_b) =
          std::max(LatticeSpec1D::is_a_site(i) ? max_a : max_b, std::abs(state[i]));
    csv.row() << intensity << std::abs(state[spec.n_sites - 1]) << rel_res
              << (max_a > 0 ? max_b / max_a : 0.0) << participation_ratio(state)
              << nonhermitian_weight(spec, state);
    write_state_csv(ctx.file("tzm_state_" + tag + ".csv"), state, ctx.comments);
  };

  if (cfg.contains("intensities"))
    for (const double intensity : cfg.at("intensities").get<std::vector<double>>())
      emit(intensity_shoot(spec, intensity), "I" + short_double(intensity));
  if (cfg.contains("boundary_amplitudes"))
    for (const double c : cfg.at("boundary_amplitudes").get<std::vector<double>>())
      emit(tzm_recursion(spec, c), "c" + short_double(c));
}

// --- design_profile -----------------------------------------------------------

void run_design_profile(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec = LatticeSpec1D::from_json(cfg.at("spec"));
  const auto& shapes = cfg.at("shapes");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string name = shape_name(shapes[i], i);
    const ProfileTarget target = shape_target(shapes[i], spec);
    const DesignedHoppings design = design_hoppings(spec, target);
    const LatticeSpec1D designed = apply_design(spec, design);

    CsvWriter csv(ctx.file("design_" + name + ".csv"), ctx.comments,
                  {"cell", "target_amplitude", "t_bar", "lambda_bar"});
    const int cells = spec.n_cells();
    const int N = spec.n_hermitian_cells;
    for (int j = 1; j <= cells; ++j) {
      auto row = csv.row();
      row << j << target.samples[static_cast<std::size_t>(j - 1)];
      if (j <= N - 1)
        row << design.t_bar[static_cast<std::size_t>(j - 1)] << std::string();
      else if (j >= N + 1 && j <= cells - 1)
        row << std::string() << design.lambda_bar[static_cast<std::size_t>(j - N - 1)];
      else
        row << std::string() << std::string();
    }

    const ComplexVector state = tzm_recursion(designed, target.samples.back());
    write_state_csv(ctx.file("profile_" + name + ".csv"), state, ctx.comments);

    double max_rel = 0.0;
    for (int j = 1; j <= cells; ++j) {
      const double got = std::abs(state[designed.site_of_a(j)]);
      const double want = target.samples[static_cast<std::size_t>(j - 1)];
      max_rel = std::max(max_rel, std::abs(got - want) / want);
    }
    ctx.summary["roundtrip_max_rel_error"][name] = max_rel;
    ctx.summary["design_intensity"][name] = total_intensity(state);
  }
}

// --- localizer_scan -----------------------------------------------------------

void run_localizer_scan(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec = LatticeSpec1D::from_json(cfg.at("spec"));
  const auto intensities = cfg.at("intensities").get<std::vector<double>>();
  const double eta = cfg.value("eta", 0.2);
  const bool locate = cfg.value("locate_closures", true);
  const std::string source = cfg.value("state_source", std::string("solver"));

  std::vector<double> x_grid;
  if (cfg.contains("x_grid")) {
    x_grid = cfg.at("x_grid").get<std::vector<double>>();
  } else {
    x_grid.resize(static_cast<std::size_t>(spec.n_sites));
    for (int i = 0; i < spec.n_sites; ++i) x_grid[static_cast<std::size_t>(i)] = i + 1;
  }

  const ModeSolver solver = make_solver(spec);
  const LinearGap gap = solver.linear_gap();
  const RealVector positions = position_operator(spec.n_sites);
  const RealVector chiral = chiral_operator(spec.n_sites);

  for (const double intensity : intensities) {
    const std::string tag = "I" + short_double(intensity);
    ComplexVector state;
    if (source == "recursion") {
      state = intensity_shoot(spec, intensity);
    } else {
      const auto grid = continuation_grid(std::min(1.0, intensity), intensity, 12);
      SolverOptions opts;
      const BranchResult branch = trace_tzm_branch(solver, gap, grid, opts);
      if (branch.branch_lost || branch.modes.empty()) {
        ctx.numerical_failure = true;
        ctx.summary["branch_lost"][tag] = branch.lost_index;
        continue;
      }
      state = branch.modes.back().state;
      if (!branch.modes.back().converged) ctx.numerical_failure = true;
    }

    const auto transform = similarity_transform(spec, state);
    const auto probes = local_invariant_scan(transform.h_s, positions, chiral, x_grid, eta,
                                             ctx.threads);

    CsvWriter scan(ctx.file("scan_" + tag + ".csv"), ctx.comments,
                   {"x", "mu", "invariant", "sigma_min", "n_zero"});
    CsvWriter sigma(ctx.file("sigma_" + tag + ".csv"), ctx.comments, {"x", "k", "sigma"});
    for (const auto& p : probes) {
      double signed_min = p.spectrum.empty() ? 0.0 : p.spectrum.front();
      for (const double s : p.spectrum)
        if (std::abs(s) < std::abs(signed_min)) signed_min = s;
      scan.row() << p.x << p.local_gap << p.invariant << signed_min << p.n_zero;
      for (std::size_t k = 0; k < p.spectrum.size(); ++k)
        sigma.row() << p.x << static_cast<int>(k) << p.spectrum[k];
    }

    {
      CsvWriter prof(ctx.file("transformed_" + tag + ".csv"), ctx.comments,
                     {"site", "abs_psi", "abs_psi_bar"});
      for (int i = 0; i < spec.n_sites; ++i)
        prof.row() << (i + 1) << std::abs(state[i])
                   << std::abs(transform.map.diagonal[i] * state[i]);
    }

    if (locate) {
      CsvWriter closures(ctx.file("closures_" + tag + ".csv"), ctx.comments,
                         {"x", "mu", "invariant_below", "invariant_above"});
      for (std::size_t i = 0; i + 1 < probes.size(); ++i) {
        if (probes[i].invariant == probes[i + 1].invariant) continue;
        const LocalizerProbe refined = locate_gap_closure(transform.h_s, positions, chiral,
                                                          probes[i].x, probes[i + 1].x, eta);
        closures.row() << refined.x << refined.local_gap << probes[i].invariant
                       << probes[i + 1].invariant;
      }
    }
    ctx.summary["mu_max_topological"][tag] = topological_gap_max(probes);
  }
}

// --- pump_evolve ----------------------------------------------------------------

void run_pump_evolve(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec = LatticeSpec1D::from_json(cfg.at("spec"));
  const PumpConfig pump = pump_from_config(cfg, spec, cfg.at("xi").get<double>());
  EvolveOptions opts;
  opts.dt = cfg.value("dt", 1e-3);
  opts.t_end = cfg.at("t_end").get<double>();
  opts.stop_when_steady = cfg.value("stop_when_steady", true);
  if (cfg.contains("store_stride")) opts.store_stride = cfg.at("store_stride").get<int>();

  const Trajectory traj = evolve(spec, pump, opts, ComplexVector::Zero(spec.n_sites));
  if (traj.diverged) {
    ctx.numerical_failure = true;
    ctx.summary["blowup_time"] = traj.blowup_time;
  }

  CsvWriter csv(ctx.file("trajectory.csv"), ctx.comments, {"t", "site", "re_phi", "im_phi"});
  for (std::size_t s = 0; s < traj.times.size(); ++s)
    for (int i = 0; i < spec.n_sites; ++i)
      csv.row() << traj.times[s] << (i + 1) << traj.states[s][i].real()
                << traj.states[s][i].imag();
  write_state_csv(ctx.file("final_state.csv"), traj.steady_state, ctx.comments);

  ctx.summary["steady"] = traj.steady;
  ctx.summary["end_time"] = traj.end_time;
  ctx.summary["final_intensity"] = total_intensity(traj.steady_state);
}

// --- steady_sweep ----------------------------------------------------------------

void run_steady_sweep(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec = LatticeSpec1D::from_json(cfg.at("spec"));
  const auto xi_grid = cfg.at("xi_grid").get<std::vector<double>>();
  const auto profile_xis = cfg.value("profile_xis", std::vector<double>{});
  SteadyStateOptions sopts;
  sopts.tol = cfg.value("tol", 1e-12);
  const bool verify = cfg.value("verify_evolve", false);

  std::vector<std::string> columns = {"xi", "intensity", "residual", "iterations", "converged"};
  if (verify) {
    columns.push_back("evolve_rel_diff");
    columns.push_back("evolve_steady");
  }
  CsvWriter csv(ctx.file("sweep.csv"), ctx.comments, columns);

  // the grid itself serves as the pump-strength ramp from vacuum
  ComplexVector phi = ComplexVector::Zero(spec.n_sites);
  std::vector<SteadyResult> results(xi_grid.size());
  for (std::size_t k = 0; k < xi_grid.size(); ++k) {
    const PumpConfig pump = pump_from_config(cfg, spec, xi_grid[k]);
    results[k] = steady_state_from(spec, pump, phi, sopts);
    phi = results[k].state;
    if (!results[k].converged) ctx.numerical_failure = true;
  }

  std::vector<double> evolve_diff(xi_grid.size(), 0.0);
  std::vector<int> evolve_steady(xi_grid.size(), 0);
  if (verify) {
    EvolveOptions eopts;
    eopts.dt = cfg.value("dt", 5e-3);
    eopts.t_end = cfg.value("t_end", 800.0);
    eopts.stop_when_steady = true;
    parallel_for(xi_grid.size(), ctx.threads, [&](std::size_t k) {
      const PumpConfig pump = pump_from_config(cfg, spec, xi_grid[k]);
      const DrivenSystem system(spec, pump);
      bool steady = false;
      const ComplexVector end = evolve_observed(system, eopts, ComplexVector::Zero(spec.n_sites),
                                                1 << 30, nullptr, &steady);
      const double scale = std::max(results[k].state.norm(), 1e-12);
      evolve_diff[k] = (end - results[k].state).norm() / scale;
      evolve_steady[k] = steady ? 1 : 0;
    });
  }

  for (std::size_t k = 0; k < xi_grid.size(); ++k) {
    auto row = csv.row();
    row << xi_grid[k] << total_intensity(results[k].state) << results[k].residual
        << results[k].iterations << static_cast<int>(results[k].converged);
    if (verify) row << evolve_diff[k] << evolve_steady[k];
  }
  for (const double xi : profile_xis) {
    const auto it = std::find(xi_grid.begin(), xi_grid.end(), xi);
    if (it == xi_grid.end()) continue;
    const auto idx = static_cast<std::size_t>(std::distance(xi_grid.begin(), it));
    write_state_csv(ctx.file("steady_profile_xi" + short_double(xi) + ".csv"), results[idx].state,
                    ctx.comments);
  }
}

// --- noise_ensemble ---------------------------------------------------------------

void run_noise_ensemble(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec = LatticeSpec1D::from_json(cfg.at("spec"));
  const PumpConfig pump = pump_from_config(cfg, spec, cfg.at("xi").get<double>());
  const SteadyResult steady = steady_state(spec, pump);
  if (!steady.converged) ctx.numerical_failure = true;

  NoiseOptions nopts;
  nopts.n_realizations = cfg.at("n_realizations").get<int>();
  if (cfg.contains("noise_range")) {
    nopts.noise_lo = cfg.at("noise_range")[0].get<double>();
    nopts.noise_hi = cfg.at("noise_range")[1].get<double>();
  }
  nopts.complex_noise = cfg.value("complex_noise", false);
  nopts.master_seed = ctx.seed;
  nopts.t_end = cfg.at("t_end").get<double>();
  nopts.dt = cfg.value("dt", 1e-3);
  if (cfg.contains("sample_stride")) nopts.sample_stride = cfg.at("sample_stride").get<int>();
  nopts.threads = ctx.threads;

  const RobustnessReport report = noise_robustness(spec, pump, steady.state, nopts);
  CsvWriter csv(ctx.file("robustness.csv"), ctx.comments, {"t", "chi_mean", "chi_std"});
  for (std::size_t s = 0; s < report.times.size(); ++s)
    csv.row() << report.times[s] << report.chi_mean[s] << report.chi_std[s];
  write_state_csv(ctx.file("steady_reference.csv"), steady.state, ctx.comments);

  ctx.summary["steady_residual"] = steady.residual;
  ctx.summary["chi_final_mean"] = report.chi_mean.back();
  ctx.summary["chi_final_std"] = report.chi_std.back();
}

// --- disorder_ensemble -------------------------------------------------------------

void run_disorder_ensemble(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec = LatticeSpec1D::from_json(cfg.at("spec"));
  const auto& shapes = cfg.at("shapes");
  const int n_seeds = cfg.at("n_seeds").get<int>();
  const double eta = cfg.value("eta", 0.2);
  DisorderConfig dcfg;
  dcfg.kind = disorder_kind_from_string(cfg.at("disorder").at("kind").get<std::string>());
  dcfg.strength = cfg.at("disorder").at("strength").get<double>();

  const RealVector positions = position_operator(spec.n_sites);
  const RealVector chiral = chiral_operator(spec.n_sites);

  for (std::size_t si = 0; si < shapes.size(); ++si) {
    const std::string name = shape_name(shapes[si], si);
    const ProfileTarget target = shape_target(shapes[si], spec);
    const LatticeSpec1D designed = apply_design(spec, design_hoppings(spec, target));
    const ComplexVector base_state = tzm_recursion(designed, target.samples.back());
    const double intensity = total_intensity(base_state);

    const auto base_transform = similarity_transform(designed, base_state);
    const auto probes =
        local_invariant_scan(base_transform.h_s, positions, chiral,
                             [&] {
                               std::vector<double> g(static_cast<std::size_t>(spec.n_sites));
                               for (int i = 0; i < spec.n_sites; ++i)
                                 g[static_cast<std::size_t>(i)] = i + 1;
                               return g;
                             }(),
                             eta, ctx.threads);
    const double mu_max = topological_gap_max(probes);

    struct SeedRow {
      double rms = 0, pert = 0, margin = 0, abs_omega = 0;
      int protected_flag = 0, persists = 0;
    };
    std::vector<SeedRow> rows(static_cast<std::size_t>(n_seeds));

    parallel_for(static_cast<std::size_t>(n_seeds), ctx.threads, [&](std::size_t s) {
      DisorderConfig local = dcfg;
      local.seed = ctx.seed * 1000003ULL + s;
      const DisorderedLattice disordered = apply_disorder(designed, local);
      // the designed intensity sits where the boundary-amplitude sweep loses
      // resolution; solve the disordered zero mode as a boundary-value problem
      const Mode dis_mode = solve_zero_mode(disordered.spec, intensity, base_state);

      double num = 0, den = 0;
      for (int j = 1; j <= spec.n_cells(); ++j) {
        const int site = spec.site_of_a(j);
        const double d = std::abs(dis_mode.state[site]) - std::abs(base_state[site]);
        num += d * d;
        den += std::norm(base_state[site]);
      }
      SeedRow row;
      row.rms = std::sqrt(num / den);

      const ComplexMatrix h_dis = build_hamiltonian_1d(disordered, base_state);
      const ComplexMatrix h_s_dis = base_transform.map.diagonal.asDiagonal() * h_dis *
                                    base_transform.map.diagonal.cwiseInverse().asDiagonal();
      const ProtectionReport prot = protection_margin(base_transform.h_s, h_s_dis, mu_max);
      row.pert = prot.perturbation_norm;
      row.margin = prot.margin;
      row.protected_flag = prot.is_protected ? 1 : 0;

      // |omega| bound through the Hermitian frame: for the rescalable lattice
      // a small transformed residual certifies a true eigenvalue at zero
      const auto dis_transform = similarity_transform(disordered, dis_mode.state);
      const ComplexVector mapped = dis_transform.map.diagonal.asDiagonal() * dis_mode.state;
      row.abs_omega = (dis_transform.h_s * mapped).norm() / mapped.norm();
      row.persists = dis_mode.converged &&
                             row.abs_omega <
                                 1e-6 * lattice_bonds(disordered).inf_norm(dis_mode.state)
                         ? 1
                         : 0;
      rows[s] = row;
    });

    CsvWriter csv(ctx.file("ensemble_" + name + ".csv"), ctx.comments,
                  {"seed", "rms_deviation", "perturbation_norm", "mu_max", "margin", "protected",
                   "abs_omega", "tzm_persists"});
    int n_protected = 0, n_persist = 0;
    double worst_rms = 0;
    for (int s = 0; s < n_seeds; ++s) {
      const SeedRow& row = rows[static_cast<std::size_t>(s)];
      csv.row() << s << row.rms << row.pert << mu_max << row.margin << row.protected_flag
                << row.abs_omega << row.persists;
      n_protected += row.protected_flag;
      n_persist += row.persists;
      worst_rms = std::max(worst_rms, row.rms);
    }
    ctx.summary["protected_fraction"][name] =
        static_cast<double>(n_protected) / static_cast<double>(n_seeds);
    ctx.summary["persist_fraction"][name] =
        static_cast<double>(n_persist) / static_cast<double>(n_seeds);
    ctx.summary["worst_rms_deviation"][name] = worst_rms;
    ctx.summary["mu_max"][name] = mu_max;
  }
}

// --- lattice2d_modes -----------------------------------------------------------------

void run_lattice2d(const json& cfg, RunContext& ctx) {
  const LatticeSpec2D base = LatticeSpec2D::from_json(cfg.at("spec2d"));
  const auto grid = cfg.at("intensity_grid").get<std::vector<double>>();
  const auto snapshots = cfg.value("profile_snapshots", std::vector<double>{});
  std::vector<double> gammas = cfg.value("gamma1_values", std::vector<double>{base.gamma1});
  SolverOptions opts;
  opts.tol = cfg.value("tol", 1e-10);
  opts.max_iter = cfg.value("max_iter", 10000);

  for (const double gamma : gammas) {
    LatticeSpec2D spec = base;
    spec.gamma1 = gamma;
    const std::string label = "gamma" + short_double(gamma);
    const ModeSolver solver = make_solver(spec);
    const BondHamiltonian ham = lattice_bonds(spec);
    const RealVector chiral = chiral_operator(spec);

    ComplexVector omegas;
    ComplexMatrix vectors;
    solver.diagonalize(ComplexVector::Zero(spec.n_total_sites()), &omegas, &vectors);
    Eigen::Index k0 = 0;
    omegas.cwiseAbs().minCoeff(&k0);
    ComplexVector state = vectors.col(k0);
    SolverOptions plain = opts;
    plain.max_iter = std::min(plain.max_iter, 120);

    CsvWriter csv(ctx.file("modes2d_" + label + ".csv"), ctx.comments,
                  {"intensity", "re_omega", "im_omega", "residual", "converged",
                   "participation_ratio"});
    for (const double intensity : grid) {
      Mode mode = solver.solve(intensity, state, plain);
      const bool on_branch =
          mode.converged && std::abs(mode.omega) < 1e-6 * ham.inf_norm(mode.state);
      if (!on_branch) {
        const Mode corrected = solve_zero_mode(ham, chiral, intensity, state, opts);
        if (corrected.converged) mode = corrected;
      }
      state = mode.state;
      if (!mode.converged) ctx.numerical_failure = true;
      csv.row() << intensity << mode.omega.real() << mode.omega.imag() << mode.residual
                << static_cast<int>(mode.converged) << participation_ratio(mode.state);
      if (std::find(snapshots.begin(), snapshots.end(), intensity) != snapshots.end()) {
        CsvWriter grid_csv(
            ctx.file("state2d_" + label + "_I" + short_double(intensity) + ".csv"), ctx.comments,
            {"x", "y", "re_psi", "im_psi"});
        for (int y = 1; y <= spec.l_y; ++y)
          for (int x = 1; x <= spec.l_x; ++x) {
            const Complex v = mode.state[spec.site_index(x, y)];
            grid_csv.row() << x << y << v.real() << v.imag();
          }
      }
    }
  }
}

// --- long_range_compare ----------------------------------------------------------------

void run_long_range(const json& cfg, RunContext& ctx) {
  const LatticeSpec1D spec_h = LatticeSpec1D::from_json(cfg.at("spec_hermitian"));
  const LatticeSpec1D spec_n = LatticeSpec1D::from_json(cfg.at("spec_nonhermitian"));
  LongRangeOptions opts;
  opts.xi_grid = cfg.at("xi_grid").get<std::vector<double>>();
  opts.kappa_a = cfg.at("kappa_a").get<double>();
  opts.kappa_b = cfg.at("kappa_b").get<double>();
  opts.frequency = cfg.value("omega_tilde", 0.0);
  opts.pump_site_m = cfg.value("pump_site_m", 1);
  opts.t_end = cfg.value("t_end", 600.0);
  opts.dt = cfg.value("dt", 5e-3);
  opts.rel_tol = cfg.value("rel_tol", 0.10);
  opts.margin_cells = cfg.value("margin_cells", 3);
  opts.threads = ctx.threads;

  const LongRangeReport report = long_range_excitation_compare(spec_h, spec_n, opts);
  CsvWriter csv(ctx.file("compare.csv"), ctx.comments,
                {"xi", "coverage_hermitian", "intensity_hermitian", "coverage_nonhermitian",
                 "intensity_nonhermitian"});
  double max_h = 0, max_n = 0;
  for (std::size_t k = 0; k < report.xi.size(); ++k) {
    csv.row() << report.xi[k] << report.coverage_first[k] << report.intensity_first[k]
              << report.coverage_second[k] << report.intensity_second[k];
    max_h = std::max(max_h, report.coverage_first[k]);
    max_n = std::max(max_n, report.coverage_second[k]);
  }
  ctx.summary["max_coverage_hermitian"] = max_h;
  ctx.summary["max_coverage_nonhermitian"] = max_n;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const json& cfg = config.raw;

  RunContext ctx;
  ctx.dir = !options.output_dir.empty() ? options.output_dir
                                        : std::filesystem::path(cfg.value("output_dir", "out"));
  ctx.seed = options.seed_override ? *options.seed_override
                                   : cfg.value("seed", static_cast<std::uint64_t>(0));
  ctx.threads = options.threads > 0 ? options.threads
                                    : (cfg.contains("threads") ? cfg.at("threads").get<int>() : 0);
  if (ctx.threads <= 0)
    ctx.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  json resolved = cfg;
  resolved["seed"] = ctx.seed;
  const std::uint64_t hash = config_hash(resolved);
  ctx.comments = {"config_hash=" + hex64(hash)};

  std::filesystem::create_directories(ctx.dir);

  switch (config.kind) {
    case ExperimentKind::spectrum_vs_intensity: run_spectrum(cfg, ctx); break;
    case ExperimentKind::tzm_profile: run_tzm_profile(cfg, ctx); break;
    case ExperimentKind::design_profile: run_design_profile(cfg, ctx); break;
    case ExperimentKind::localizer_scan: run_localizer_scan(cfg, ctx); break;
    case ExperimentKind::pump_evolve: run_pump_evolve(cfg, ctx); break;
    case ExperimentKind::steady_sweep: run_steady_sweep(cfg, ctx); break;
    case ExperimentKind::noise_ensemble: run_noise_ensemble(cfg, ctx); break;
    case ExperimentKind::disorder_ensemble: run_disorder_ensemble(cfg, ctx); break;
    case ExperimentKind::lattice2d_modes: run_lattice2d(cfg, ctx); break;
    case ExperimentKind::long_range_compare: run_long_range(cfg, ctx); break;
  }

  ExperimentOutcome outcome;
  outcome.output_dir = ctx.dir;
  outcome.exit_code = ctx.numerical_failure ? 3 : 0;

  std::sort(ctx.file_names.begin(), ctx.file_names.end());
  {
    std::ofstream manifest(ctx.dir / "manifest.txt", std::ios::binary);
    for (const std::string& name : ctx.file_names) {
      OutputFile f;
      f.name = name;
      f.bytes = std::filesystem::file_size(ctx.dir / name);
      f.hash = fnv1a64_file(ctx.dir / name);
      manifest << hex64(f.hash) << "  " << f.bytes << "  " << f.name << "\n";
      outcome.files.push_back(f);
    }
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json summary = ctx.summary;
  summary["experiment"] = to_string(config.kind);
  summary["config"] = resolved;
  summary["config_hash"] = hex64(hash);
  summary["seed"] = ctx.seed;
  summary["threads"] = ctx.threads;
  summary["wall_time_s"] = wall;
  summary["exit_code"] = outcome.exit_code;
  summary["numerical_failure"] = ctx.numerical_failure;
  {
    json names = json::array();
    for (const auto& f : outcome.files) names.push_back(f.name);
    summary["outputs"] = names;
  }
  std::ofstream sfile(ctx.dir / "summary.json", std::ios::binary);
  sfile << summary.dump(2) << "\n";
  outcome.summary = summary;
  return outcome;
}

}  // namespace nhtl
