#pragma once

#include "nusmpbic/singular_field.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nusmpbic {

class PqrError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Whitespace-delimited PQR reader. ATOM/HETATM records carry
///   name serial atom residue [chain] resnum x y z charge radius
/// and the optional chain id is detected from the token count.
inline AtomSet parse_pqr(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PqrError("cannot open PQR file: " + path);

  AtomSet atoms;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string record;
    if (!(ss >> record)) continue;
    if (record != "ATOM" && record != "HETATM") continue;

    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    // serial atom residue [chain] resnum x y z charge radius
    if (tok.size() != 9 && tok.size() != 10)
      throw PqrError("line " + std::to_string(lineno) + ": expected 10 or 11 fields, got " +
                     std::to_string(tok.size() + 1));
    const size_t first_num = tok.size() == 10 ? 4 : 3; // residue number position

    auto num = [&](size_t idx, const char* what) {
      try {
        size_t used = 0;
        const double v = std::stod(tok[idx], &used);
        if (used != tok[idx].size()) throw std::invalid_argument(what);
        return v;
      } catch (const std::exception&) {
        throw PqrError("line " + std::to_string(lineno) + ": malformed " + what + " field '" +
                       tok[idx] + "'");
      }
    };

    const double x = num(first_num + 1, "x");
    const double y = num(first_num + 2, "y");
    const double z = num(first_num + 3, "z");
    const double charge = num(first_num + 4, "charge");
    const double radius = num(first_num + 5, "radius");
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
      throw PqrError("line " + std::to_string(lineno) + ": non-finite coordinates");
    if (radius < 0.0)
      throw PqrError("line " + std::to_string(lineno) + ": negative radius");

    atoms.positions.emplace_back(x, y, z);
    atoms.charge_numbers.push_back(charge);
    atoms.radii.push_back(radius);
  }
  if (atoms.empty()) throw PqrError("no ATOM/HETATM records in " + path);
  return atoms;
}

/// Minimal writer, one ATOM record per atom. Used for generated fixtures.
inline void write_pqr(const AtomSet& atoms, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw PqrError("cannot write PQR file: " + path);
  out.precision(6);
  out << std::fixed;
  for (int j = 0; j < atoms.count(); ++j) {
    out << "ATOM " << (j + 1) << " Q GEN " << (j + 1) << " " << atoms.positions[j].x() << " "
        << atoms.positions[j].y() << " " << atoms.positions[j].z() << " "
        << atoms.charge_numbers[j] << " " << atoms.radii[j] << "\n";
  }
}

} // namespace nusmpbic
