#include "unite/heads.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "unite/integrals.hpp"

namespace unite {

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "energy") return HeadKind::energy;
  if (s == "dipole") return HeadKind::dipole;
  if (s == "polarizability") return HeadKind::polarizability;
  if (s == "mo") return HeadKind::mo;
  if (s == "r2") return HeadKind::r2;
  if (s == "density") return HeadKind::density;
  throw std::invalid_argument("unknown head: " + s);
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::energy: return "energy";
    case HeadKind::dipole: return "dipole";
    case HeadKind::polarizability: return "polarizability";
    case HeadKind::mo: return "mo";
    case HeadKind::r2: return "r2";
    case HeadKind::density: return "density";
  }
  throw std::logic_error("bad head kind");
}

void add_head_params(ParamStore& store, HeadKind kind, const ModelConfig& cfg,
                     const std::vector<int>& elements, unsigned seed) {
  std::mt19937 rng(seed);
  const ChannelSpec& spec = cfg.channels;
  const auto weight = [&](const std::string& name, int rows, int cols) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> v(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (double& x : v) x = dist(rng);
    store.add({name, {rows, cols}, std::move(v), true});
  };
  const auto biases = [&] {
    for (int z : elements)
      store.add({"head.bz.z" + std::to_string(z), {1}, {0.0}, true});
  };
  switch (kind) {
    case HeadKind::energy:
      weight("head.Wo", 1, spec.n_neurons());
      biases();
      break;
    case HeadKind::dipole:
    case HeadKind::polarizability:
      weight("head.Wo0", 1, spec.count(0, 0));
      weight("head.Wo1", 1, spec.count(1, 0));
      biases();
      break;
    case HeadKind::mo:
      weight("head.Wa", 1, spec.n_neurons());
      weight("head.Wo", 1, spec.n_neurons());
      biases();
      break;
    case HeadKind::r2:
      weight("head.Wo0", 1, spec.count(0, 0));
      weight("head.Wo1", 1, spec.count(1, 0));
      weight("head.Wo2", 1, spec.count(0, 0));
      biases();
      break;
    case HeadKind::density: {
      const AuxBasisSpec& aux = AuxBasisSpec::standard();
      for (int z : elements)
        for (int l = 0; l <= 2; ++l)
          weight("head.Wd.z" + std::to_string(z) + ".l" + std::to_string(l),
                 aux.count(l), spec.count(l, 0));
      break;
    }
  }
}

std::vector<double> density_evaluate(const DensityCoeffs<double>& d, const Geometry& g,
                                     const std::vector<Eigen::Vector3d>& points,
                                     bool parallel) {
  const AuxBasisSpec& aux = AuxBasisSpec::standard();
  std::vector<double> out(points.size(), 0.0);
  const auto eval_point = [&](int pi) {
    const Eigen::Vector3d& r = points[static_cast<std::size_t>(pi)];
    double s = 0.0;
    for (int a = 0; a < g.n_atoms(); ++a) {
      const Eigen::Vector3d v = r - g.x[static_cast<std::size_t>(a)];
      const double v2 = v.squaredNorm();
      const std::vector<double>& da = d.d[static_cast<std::size_t>(a)];
      for (std::size_t si = 0; si < aux.shells.size(); ++si) {
        const AuxShell& sh = aux.shells[si];
        const double radial = sh.norm * std::exp(-sh.gamma * v2);
        if (std::abs(radial) < 1e-300) continue;
        const int base = aux.func_offset(static_cast<int>(si));
        for (int mi = 0; mi < 2 * sh.l + 1; ++mi) {
          const double c = da[static_cast<std::size_t>(base + mi)];
          if (c == 0.0) continue;
          double ang = 0.0;
          for (const auto& t : o3::solid_harmonic_terms(sh.l, mi - sh.l))
            ang += t.c * std::pow(v.x(), t.ex) * std::pow(v.y(), t.ey) * std::pow(v.z(), t.ez);
          s += c * radial * ang;
        }
      }
    }
    out[static_cast<std::size_t>(pi)] = s;
  };
#ifdef UNITE_HAVE_OPENMP
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int pi = 0; pi < static_cast<int>(points.size()); ++pi) eval_point(pi);
    return out;
  }
#endif
  (void)parallel;
  for (int pi = 0; pi < static_cast<int>(points.size()); ++pi) eval_point(pi);
  return out;
}

Eigen::MatrixXd density_overlap(const Geometry& g) {
  const AuxBasisSpec& aux = AuxBasisSpec::standard();
  const int per_atom = aux.n_func();
  const int n = g.n_atoms() * per_atom;
  Eigen::MatrixXd S(n, n);
  for (int a = 0; a < g.n_atoms(); ++a)
    for (int b = 0; b < g.n_atoms(); ++b) {
      if (b < a) continue;
      for (std::size_t si = 0; si < aux.shells.size(); ++si)
        for (std::size_t sj = 0; sj < aux.shells.size(); ++sj) {
          const AuxShell& s1 = aux.shells[si];
          const AuxShell& s2 = aux.shells[sj];
          const int o1 = a * per_atom + aux.func_offset(static_cast<int>(si));
          const int o2 = b * per_atom + aux.func_offset(static_cast<int>(sj));
          for (int m1 = 0; m1 < 2 * s1.l + 1; ++m1)
            for (int m2 = 0; m2 < 2 * s2.l + 1; ++m2)
              S(o1 + m1, o2 + m2) = overlap_prim(
                  s1.l, m1 - s1.l, s1.gamma, g.x[static_cast<std::size_t>(a)],
                  s2.l, m2 - s2.l, s2.gamma, g.x[static_cast<std::size_t>(b)]);
        }
    }
  // fill the lower triangle by symmetry
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) S(i, j) = S(j, i);
  return S;
}

std::vector<double> density_function_integrals() {
  const AuxBasisSpec& aux = AuxBasisSpec::standard();
  std::vector<double> out(static_cast<std::size_t>(aux.n_func()), 0.0);
  for (std::size_t si = 0; si < aux.shells.size(); ++si) {
    const AuxShell& sh = aux.shells[si];
    if (sh.l != 0) continue;
    out[static_cast<std::size_t>(aux.func_offset(static_cast<int>(si)))] =
        gaussian_integral(0, sh.gamma);
  }
  return out;
}

std::vector<Eigen::Vector3d> DensityGrid::points() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(static_cast<std::size_t>(n[0]) * static_cast<std::size_t>(n[1]) *
              static_cast<std::size_t>(n[2]));
  for (int i = 0; i < n[0]; ++i)
    for (int j = 0; j < n[1]; ++j)
      for (int k = 0; k < n[2]; ++k)
        out.push_back(origin + spacing * Eigen::Vector3d(i, j, k));
  return out;
}

DensityGrid make_density_grid(const Geometry& g, double spacing, double margin) {
  Eigen::Vector3d lo = g.x[0], hi = g.x[0];
  for (const auto& x : g.x) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  DensityGrid grid;
  grid.spacing = spacing;
  grid.origin = lo - Eigen::Vector3d::Constant(margin);
  for (int k = 0; k < 3; ++k)
    grid.n[static_cast<std::size_t>(k)] =
        static_cast<int>(std::ceil((hi[k] - lo[k] + 2.0 * margin) / spacing)) + 1;
  return grid;
}

double epsilon_rho(const std::vector<double>& rho_ref, const std::vector<double>& rho_pred,
                   double cutoff) {
  if (rho_ref.size() != rho_pred.size())
    throw std::invalid_argument("epsilon_rho: sample count mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < rho_ref.size(); ++k) {
    if (std::abs(rho_ref[k]) < cutoff) continue;
    num += std::abs(rho_ref[k] - rho_pred[k]);
    den += std::abs(rho_ref[k]);
  }
  if (den == 0.0) throw std::domain_error("epsilon_rho: reference density vanishes");
  return 100.0 * num / den;
}

void write_cube(const std::string& path, const Geometry& g, const DensityGrid& grid,
                const std::vector<double>& field, const std::string& title) {
  const std::size_t expect = static_cast<std::size_t>(grid.n[0]) *
                             static_cast<std::size_t>(grid.n[1]) *
                             static_cast<std::size_t>(grid.n[2]);
  if (field.size() != expect)
    throw std::invalid_argument("write_cube: field size does not match grid");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_cube: cannot open " + path);
  f << title << "\n";
  f << "electron density, all quantities in atomic units\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%5d %11.6f %11.6f %11.6f\n", g.n_atoms(),
                grid.origin.x(), grid.origin.y(), grid.origin.z());
  f << buf;
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d ax = grid.spacing * Eigen::Vector3d::Unit(k);
    std::snprintf(buf, sizeof(buf), "%5d %11.6f %11.6f %11.6f\n",
                  grid.n[static_cast<std::size_t>(k)], ax.x(), ax.y(), ax.z());
    f << buf;
  }
  for (int a = 0; a < g.n_atoms(); ++a) {
    std::snprintf(buf, sizeof(buf), "%5d %11.6f %11.6f %11.6f %11.6f\n",
                  g.Z[static_cast<std::size_t>(a)],
                  static_cast<double>(g.Z[static_cast<std::size_t>(a)]),
                  g.x[static_cast<std::size_t>(a)].x(), g.x[static_cast<std::size_t>(a)].y(),
                  g.x[static_cast<std::size_t>(a)].z());
    f << buf;
  }
  int col = 0;
  for (std::size_t k = 0; k < field.size(); ++k) {
    std::snprintf(buf, sizeof(buf), " %12.5E", field[k]);
    f << buf;
    if (++col == 6 || (k + 1) % static_cast<std::size_t>(grid.n[2]) == 0) {
      f << "\n";
      col = 0;
    }
  }
  if (col) f << "\n";
}

}  // namespace unite
