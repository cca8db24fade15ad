#pragma once

// Real spherical harmonics, SO(3)/O(3) Clebsch-Gordan coefficients and
// Wigner-D rotation matrices, evaluated from closed forms at startup and
// cached as immutable tables. All queries after construction are pure and
// safe to share across threads.

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace unite::o3 {

inline constexpr int kLMax = 4;       // maximum neuron degree in the network
inline constexpr int kTableLMax = 8;  // products of two degree-4 irreps

struct Irrep {
  int l = 0;
  int p = +1;
  int dim() const { return 2 * l + 1; }
  friend bool operator==(const Irrep&, const Irrep&) = default;
};

struct Monomial {
  int ex, ey, ez;
  double c;
};

// Polynomial expansion of the real solid harmonic S_lm(x,y,z) = r^l Y_lm(r/|r|).
const std::vector<Monomial>& solid_harmonic_terms(int l, int m);

// Real spherical harmonic Y_lm(r/|r|); throws on |r| = 0 or l > kTableLMax.
double real_spherical_harmonic(int l, int m, const Eigen::Vector3d& r);

// Evaluates the whole degree-l vector at once, m = -l..l.
Eigen::VectorXd rsh_vector(int l, const Eigen::Vector3d& r);

// Sphere-surface norm  integral |Y_lm|^2 dOmega  in this implementation's
// normalization (uniform across m within a degree).
double rsh_sphere_norm2(int l);

struct CgEntry {
  std::int16_t m1, m2, m;  // stored as m + l offsets into [0, 2l]
  double c;
};

class CgTable {
public:
  // Builds SO(3) CG coefficients in the real basis for all degrees <= lmax.
  explicit CgTable(int lmax = kTableLMax);

  int lmax() const { return lmax_; }

  double so3(int l1, int m1, int l2, int m2, int l, int m) const;
  double o3(int l1, int p1, int m1, int l2, int p2, int m2, int l, int p, int m) const;

  // Nonzero coefficients of the (l1, l2) -> l coupling block.
  const std::vector<CgEntry>& nonzeros(int l1, int l2, int l) const;

  // Test hook: scales the first stored coefficient of the (l1, l2) -> l
  // coupling block in place. Only for fault-injection in the property
  // harness; corrupts the table for the rest of the process.
  void scale_entry_for_testing(int l1, int l2, int l, double factor);

  // Real Gaunt factor  integral Y_{l1m1} Y_{l2m2} Y_{lm} dOmega  in this
  // implementation's RSH normalization (degrees <= kLMax suffice for the
  // featurizer; table covers lmax).
  double real_gaunt(int l1, int m1, int l2, int m2, int l, int m) const;

private:
  int lmax_;
  // dense[l1][l2][l] -> flattened (m1, m2, m) block
  std::vector<std::vector<std::vector<std::vector<double>>>> dense_;
  std::vector<std::vector<std::vector<std::vector<CgEntry>>>> nz_;
  std::vector<std::vector<std::vector<std::vector<double>>>> gaunt_;
  static const std::vector<CgEntry> empty_;
};

// Shared immutable table, built on first use.
const CgTable& cg_table();

// Applies CgTable::scale_entry_for_testing to the shared table.
void scale_cg_entry_for_testing(int l1, int l2, int l, double factor);

// Wigner-D matrix of degree l for a proper rotation, in the same RSH
// convention as real_spherical_harmonic: Y_l(R r) = D_l(R) Y_l(r).
// Throws if R is not orthogonal within 1e-10 or det(R) != +1.
Eigen::MatrixXd wigner_d(int l, const Eigen::Matrix3d& R);

// Uniformly distributed random rotation from 3 seeds in [0,1).
Eigen::Matrix3d random_rotation(double u1, double u2, double u3);

}  // namespace unite::o3
