#pragma once

// Atomic-orbital basis layout over a toy per-element shell table, the
// block-structured order-2 feature tensor, and the exact group actions
// (rotation, parity, permutation) used by the featurizer, the network and
// the property-test harnesses.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "unite/o3.hpp"

namespace unite {

struct ShellSpec {
  int n;            // principal index within (element, l), 1-based
  int l;            // 0..2
  double exponent;  // Gaussian width, inverse squared Bohr
  double onsite_e;  // Hueckel on-site energy, Hartree (artifact constant)
};

struct Geometry {
  std::vector<int> Z;
  std::vector<Eigen::Vector3d> x;  // Bohr
  int charge = 0;

  int n_atoms() const { return static_cast<int>(Z.size()); }
  int n_elec() const;
  // throws std::invalid_argument on near-coincident atoms or an odd
  // electron count (closed-shell convention)
  void validate() const;
};

// Toy shell table: H 1s; C,N,O 2s+1p; z > 8 adds a d shell.
const std::vector<ShellSpec>& element_shells(int z);
double element_zeff(int z);
bool element_known(int z);

// Largest shell count of any tabulated element at degree l (the M_l used to
// size matching-layer weights; independent of the molecule).
int max_shells_per_l(int l);

class AOBasis {
public:
  AOBasis() = default;
  explicit AOBasis(const Geometry& g);

  struct ShellRef {
    int atom;
    int n;  // principal index within (atom, l)
    int l;
    double exponent;
    int offset;  // first flat AO index; m = -l..l contiguous
  };

  int n_ao() const { return n_ao_; }
  int n_atoms() const { return static_cast<int>(atom_offset_.size()); }
  const std::vector<ShellRef>& shells() const { return shells_; }
  const std::vector<int>& atom_shells(int a) const;  // indices into shells()
  int atom_offset(int a) const;
  int atom_nao(int a) const;
  // per-AO degree and (-1)^l parity sign, flat layout
  const std::vector<int>& ao_l() const { return ao_l_; }

private:
  int n_ao_ = 0;
  std::vector<ShellRef> shells_;
  std::vector<std::vector<int>> atom_shell_idx_;
  std::vector<int> atom_offset_, atom_nao_;
  std::vector<int> ao_l_;
};

struct NBodyTensor {
  Geometry geom;
  AOBasis basis;
  std::vector<std::string> channel_names;
  std::vector<Eigen::MatrixXd> channels;  // dense symmetric, AO dimension

  int n_channels() const { return static_cast<int>(channels.size()); }
  // contiguous sub-matrix for the (A, B) atom pair
  Eigen::Block<const Eigen::MatrixXd> block_at(int channel, int A, int B) const;
};

NBodyTensor rotate_tensor(const NBodyTensor& T, const Eigen::Matrix3d& R);
// spatial inversion: block-wise sign (-1)^(l+l')
NBodyTensor invert_tensor(const NBodyTensor& T);
// block(sigma[A], sigma[B]) of the result equals block(A, B) of the input
NBodyTensor permute_atoms(const NBodyTensor& T, const std::vector<int>& sigma);

// Block-diagonal Wigner-D over all AOs of the basis.
Eigen::MatrixXd basis_rotation_matrix(const AOBasis& basis, const Eigen::Matrix3d& R);

}  // namespace unite
