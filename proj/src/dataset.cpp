#include "unite/dataset.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "unite/featurizer.hpp"

namespace unite {

using nlohmann::json;

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::runtime_error("dataset line " + std::to_string(line) + ": " + what);
}

DatasetRecord parse_record(const std::string& text, int line) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(line, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(line, "record is not a JSON object");

  DatasetRecord r;
  r.line = line;
  try {
    if (!j.contains("atoms") || !j["atoms"].is_array()) fail(line, "missing 'atoms' list");
    for (const auto& z : j["atoms"]) r.g.Z.push_back(z.get<int>());
    if (!j.contains("coords_bohr") || !j["coords_bohr"].is_array())
      fail(line, "missing 'coords_bohr' list");
    for (const auto& x : j["coords_bohr"]) {
      if (!x.is_array() || x.size() != 3) fail(line, "coordinate entry is not a 3-vector");
      r.g.x.emplace_back(x[0].get<double>(), x[1].get<double>(), x[2].get<double>());
    }
    if (r.g.Z.size() != r.g.x.size())
      fail(line, "atom count " + std::to_string(r.g.Z.size()) + " != coordinate count " +
                     std::to_string(r.g.x.size()));
    if (r.g.Z.empty()) fail(line, "empty molecule");
    r.g.charge = j.value("charge", 0);
    r.molecule_id = j.value("molecule_id", "line" + std::to_string(line));

    if (j.contains("labels")) {
      const json& lab = j["labels"];
      if (!lab.is_object()) fail(line, "'labels' is not an object");
      for (const auto& [key, val] : lab.items()) {
        if (key == "dipole_au") {
          if (!val.is_array() || val.size() != 3) fail(line, "dipole_au is not a 3-vector");
          r.dipole_au = {val[0].get<double>(), val[1].get<double>(), val[2].get<double>()};
        } else if (key == "forces_hartree_per_bohr") {
          std::vector<Eigen::Vector3d> F;
          for (const auto& f : val) {
            if (!f.is_array() || f.size() != 3) fail(line, "force entry is not a 3-vector");
            F.emplace_back(f[0].get<double>(), f[1].get<double>(), f[2].get<double>());
          }
          if (F.size() != r.g.Z.size()) fail(line, "force count != atom count");
          r.forces = std::move(F);
        } else if (key == "density_coeffs") {
          r.density_coeffs = val.get<std::vector<double>>();
        } else {
          r.scalars[key] = val.get<double>();
        }
      }
    }
  } catch (const json::exception& e) {
    fail(line, std::string("bad field type: ") + e.what());
  }
  return r;
}

}  // namespace

std::vector<DatasetRecord> parse_dataset(std::istream& in) {
  std::vector<DatasetRecord> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(text, line));
  }
  return out;
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records) {
    json j;
    j["atoms"] = r.g.Z;
    json coords = json::array();
    for (const auto& x : r.g.x) coords.push_back({x[0], x[1], x[2]});
    j["coords_bohr"] = coords;
    if (r.g.charge != 0) j["charge"] = r.g.charge;
    j["molecule_id"] = r.molecule_id;
    json lab = json::object();
    for (const auto& [key, val] : r.scalars) lab[key] = val;
    if (r.dipole_au) lab["dipole_au"] = {(*r.dipole_au)[0], (*r.dipole_au)[1], (*r.dipole_au)[2]};
    if (r.forces) {
      json F = json::array();
      for (const auto& f : *r.forces) F.push_back({f[0], f[1], f[2]});
      lab["forces_hartree_per_bohr"] = F;
    }
    if (r.density_coeffs) lab["density_coeffs"] = *r.density_coeffs;
    if (!lab.empty()) j["labels"] = lab;
    out << j.dump() << "\n";
  }
}

void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset: " + path);
  write_dataset(out, records);
}

namespace {

// accept only well-conditioned draws: valid closed-shell mean field with a
// clear HOMO-LUMO gap
bool usable(const Geometry& g, double* e_tb) {
  if (g.n_elec() % 2 != 0) return false;
  try {
    const MeanFieldState st = mean_field(g, AOBasis(g));
    if (st.n_occ >= st.eps.size() || st.n_occ == 0) return false;
    if (st.eps[st.n_occ] - st.eps[st.n_occ - 1] < 0.02) return false;
    if (st.gap0 < 0.02) return false;  // charges come from the first pass
    *e_tb = st.e_tb;
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

Geometry random_geometry(std::mt19937& rng) {
  std::uniform_int_distribution<int> natoms(3, 6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int elements[] = {1, 6, 7, 8};
  for (;;) {
    Geometry g;
    const int n = natoms(rng);
    for (int a = 0; a < n; ++a) {
      g.Z.push_back(elements[std::uniform_int_distribution<int>(0, 3)(rng)]);
      for (int attempt = 0; attempt < 200; ++attempt) {
        const Eigen::Vector3d x(3.5 * u(rng), 3.5 * u(rng), 3.5 * u(rng));
        bool clear = true;
        for (const auto& other : g.x)
          if ((x - other).norm() < 1.8) clear = false;
        if (clear) {
          g.x.push_back(x);
          break;
        }
      }
      if (g.x.size() != g.Z.size()) break;
    }
    if (g.x.size() == g.Z.size()) return g;
  }
}

double toy_energy(const Geometry& g, double e_tb) {
  double shift = 0.0;
  for (int z : g.Z) shift += 0.05 * z;
  return 1.1 * e_tb + shift;
}

}  // namespace

std::vector<DatasetRecord> make_toy_dataset(int n_molecules, unsigned seed) {
  if (n_molecules <= 0) throw std::invalid_argument("make_toy_dataset: n_molecules <= 0");
  std::mt19937 rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.08);
  std::vector<DatasetRecord> out;
  int family = 0;
  while (static_cast<int>(out.size()) < n_molecules) {
    double e_tb = 0.0;
    const Geometry base = random_geometry(rng);
    if (!usable(base, &e_tb)) continue;
    const std::string id = "toy" + std::to_string(family++);
    DatasetRecord r;
    r.g = base;
    r.molecule_id = id;
    r.scalars["energy_hartree"] = toy_energy(base, e_tb);
    r.line = static_cast<int>(out.size()) + 1;
    out.push_back(std::move(r));
    if (static_cast<int>(out.size()) == n_molecules) break;
    // a jittered conformer of the same molecule, for pairwise losses
    Geometry conf = base;
    for (auto& x : conf.x)
      for (int k = 0; k < 3; ++k) x[k] += jitter(rng);
    if (!usable(conf, &e_tb)) continue;
    DatasetRecord c;
    c.g = conf;
    c.molecule_id = id;
    c.scalars["energy_hartree"] = toy_energy(conf, e_tb);
    c.line = static_cast<int>(out.size()) + 1;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace unite
