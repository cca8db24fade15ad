#pragma once

// JSON-lines dataset records: one molecule per line with coordinates in Bohr
// and labels in atomic units. The parser reports malformed input with line
// numbers and never skips a record silently.

#include <iosfwd>
#include <map>
#include <optional>

#include "unite/ao_basis.hpp"

namespace unite {

struct DatasetRecord {
  Geometry g;
  std::map<std::string, double> scalars;  // energy_hartree and intensive labels
  std::optional<std::array<double, 3>> dipole_au;
  std::optional<std::vector<Eigen::Vector3d>> forces;  // Hartree/Bohr
  std::optional<std::vector<double>> density_coeffs;
  std::string molecule_id;
  int line = 0;

  bool has_scalar(const std::string& key) const { return scalars.count(key) > 0; }
};

std::vector<DatasetRecord> parse_dataset(std::istream& in);
std::vector<DatasetRecord> load_dataset(const std::string& path);

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records);
void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records);

// Random small H/C/N/O molecules with synthetic energy labels: the baseline
// mean-field energy scaled by 1.1 plus a fixed per-element shift. Conformer
// pairs share a molecule_id so the geometry-pair loss has partners.
std::vector<DatasetRecord> make_toy_dataset(int n_molecules, unsigned seed);

}  // namespace unite
