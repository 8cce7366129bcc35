#pragma once

#include "nusmpbic/physics.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct CaseConfig {
  ProblemConfig problem;
  SolventSpec solvent;
};

// Plain key = value file. Unknown keys are rejected. Species are repeated
// blocks on one line each:
//   species = Cl- Z=-1 cb=0.1 r=1.81      (radius in A, volume 4 pi r^3 / 3)
//   species = X   Z=1  cb=0.2 v=24.84     (volume directly, A^3)
// v0 defaults to min_i v_i when absent.
inline CaseConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);

  CaseConfig cfg;
  std::optional<double> v0;
  std::map<std::string, bool> seen;
  std::string line;
  long lineno = 0;

  auto fail = [&](const std::string& msg) {
    throw ConfigError(path + ":" + std::to_string(lineno) + ": " + msg);
  };
  auto to_double = [&](const std::string& s) {
    try {
      size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) fail("malformed number '" + s + "'");
      return v;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      fail("malformed number '" + s + "'");
      return 0.0;
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) fail("expected 'key = value'");

    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("empty key");
    if (key != "species" && seen[key]) fail("duplicate key '" + key + "'");
    seen[key] = true;

    auto& p = cfg.problem;
    if (key == "eps_p") p.eps_p = to_double(value);
    else if (key == "eps_m") p.eps_m = to_double(value);
    else if (key == "eps_s") p.eps_s = to_double(value);
    else if (key == "sigma") p.sigma = to_double(value);
    else if (key == "u_b") p.u_b = to_double(value);
    else if (key == "u_t") p.u_t = to_double(value);
    else if (key == "omega") p.omega = to_double(value);
    else if (key == "tol") p.tol = to_double(value);
    else if (key == "newton_tol") p.newton_tol = to_double(value);
    else if (key == "overflow_bound") p.overflow_bound = to_double(value);
    else if (key == "temperature") p.temperature = to_double(value);
    else if (key == "v0") v0 = to_double(value);
    else if (key == "box") {
      std::istringstream bs(value);
      for (double& e : p.box)
        if (!(bs >> e)) fail("box needs six extents: x1 x2 y1 y2 z1 z2");
    } else if (key == "membrane_z") {
      std::istringstream ms(value);
      if (!(ms >> p.membrane_z1 >> p.membrane_z2)) fail("membrane_z needs two numbers: Z1 Z2");
    } else if (key == "species") {
      std::istringstream ss(value);
      IonSpecies sp;
      if (!(ss >> sp.name)) fail("species needs a name");
      std::string field;
      bool have_z = false, have_cb = false, have_size = false;
      while (ss >> field) {
        const auto feq = field.find('=');
        if (feq == std::string::npos) fail("species field '" + field + "' is not key=value");
        const std::string fk = field.substr(0, feq);
        const std::string fv = field.substr(feq + 1);
        if (fk == "Z") {
          sp.charge_number = static_cast<int>(to_double(fv));
          have_z = true;
        } else if (fk == "cb") {
          sp.bulk_concentration = to_double(fv);
          have_cb = true;
        } else if (fk == "r") {
          sp.ion_volume = sphere_volume(to_double(fv));
          have_size = true;
        } else if (fk == "v") {
          sp.ion_volume = to_double(fv);
          have_size = true;
        } else {
          fail("unknown species field '" + fk + "'");
        }
      }
      if (!have_z || !have_cb || !have_size)
        fail("species '" + sp.name + "' needs Z=, cb= and r= or v=");
      cfg.solvent.species.push_back(sp);
    } else {
      fail("unknown key '" + key + "'");
    }
  }

  if (cfg.solvent.species.empty())
    throw ConfigError(path + ": at least one species line is required");
  cfg.solvent.v0 = v0.value_or(cfg.solvent.min_volume());
  cfg.solvent.validate();
  cfg.problem.validate();
  return cfg;
}

} // namespace nusmpbic
