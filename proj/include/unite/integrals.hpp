#pragma once

// Analytic integrals over single solid-harmonic Gaussians:
//   - normalization constants,
//   - two-center overlaps (Gaussian product theorem + 1D binomial expansion),
//   - on-site 3-index overlaps (real Gaunt angular factor x radial Gamma form).
// Every formula here has a 3D-quadrature oracle in the test suite.

#include <Eigen/Dense>

#include "unite/ao_basis.hpp"

namespace unite {

// N such that N * S_lm(r) * exp(-alpha r^2) has unit L2 norm.
double gaussian_norm(int l, double alpha);

// <phi1|phi2> for unit-normalized solid-harmonic Gaussians centered at A, B.
double overlap_prim(int l1, int m1, double alpha, const Eigen::Vector3d& A,
                    int l2, int m2, double beta, const Eigen::Vector3d& B);

// integral of S_{l1 m1} S_{l2 m2} S_{l m} exp(-a r^2) over R^3, shared center,
// without normalization factors.
double onsite_triple_raw(int l1, int m1, int l2, int m2, int l, int m, double a);

// integral over R^3 of a unit-normalized s-type Gaussian (used by density
// integral checks); zero for l > 0 by symmetry.
double gaussian_integral(int l, double alpha);

}  // namespace unite
