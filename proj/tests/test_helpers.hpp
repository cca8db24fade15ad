#pragma once

// Shared helpers for the test suites: seeded random molecules and a
// brute-force midpoint-grid integrator used as the oracle for every
// analytic integral.

#include <Eigen/Dense>
#include <functional>
#include <random>

#include "unite/ao_basis.hpp"
#include "unite/featurizer.hpp"

namespace unite::testing {

// Random small molecule with a clean frontier gap; eigenvector-derived
// features (P, D_h, D_p) are conditioned by the HOMO-LUMO gap, so tiny-gap
// draws are rejected to keep 1e-9 equivariance tolerances meaningful.
inline Geometry random_molecule(std::mt19937& rng, int min_atoms = 3,
                                int max_atoms = 8) {
  std::uniform_int_distribution<int> natoms(min_atoms, max_atoms);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int elements[] = {1, 6, 7, 8};
  for (;;) {
    Geometry g;
    const int n = natoms(rng);
    for (int a = 0; a < n; ++a) {
      g.Z.push_back(elements[std::uniform_int_distribution<int>(0, 3)(rng)]);
      for (int attempt = 0; attempt < 200; ++attempt) {
        const Eigen::Vector3d x(3.5 * u(rng), 3.5 * u(rng), 3.5 * u(rng));
        bool ok = true;
        for (const auto& other : g.x)
          if ((x - other).norm() < 1.8) ok = false;
        if (ok) {
          g.x.push_back(x);
          break;
        }
      }
      if (g.x.size() != g.Z.size()) break;  // crowded draw, restart
    }
    if (g.x.size() != g.Z.size()) continue;
    if (g.n_elec() % 2 != 0) continue;
    try {
      const MeanFieldState st = mean_field(g, AOBasis(g));
      if (st.n_occ >= st.eps.size()) continue;
      if (st.eps[st.n_occ] - st.eps[st.n_occ - 1] < 0.02) continue;
      // the Mulliken charges come from the first Hueckel pass, so its
      // frontier gap conditions the features as well
      if (st.gap0 < 0.02) continue;
    } catch (const std::exception&) {
      continue;
    }
    return g;
  }
}

// Snap coordinates to a 2^-20 Bohr grid so that adding a same-grid offset is
// exact in floating point (used by bit-exact translation tests).
inline void snap_to_grid(Geometry& g) {
  for (auto& x : g.x)
    for (int k = 0; k < 3; ++k)
      x[k] = std::round(x[k] * 1048576.0) / 1048576.0;
}

// Midpoint sum over a cube; exponentially accurate for Gaussian-decay
// integrands when the cube covers the support.
inline double integrate3d(const std::function<double(const Eigen::Vector3d&)>& f,
                          const Eigen::Vector3d& center, double halfwidth,
                          int n) {
  const double h = 2.0 * halfwidth / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Eigen::Vector3d r =
            center + Eigen::Vector3d(-halfwidth + (i + 0.5) * h,
                                     -halfwidth + (j + 0.5) * h,
                                     -halfwidth + (k + 0.5) * h);
        s += f(r);
      }
  return s * h * h * h;
}

}  // namespace unite::testing
