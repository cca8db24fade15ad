#pragma once

// Toy tight-binding featurizer: a one-shot Hueckel-plus-charge mean field
// producing the feature channel stack (F, P, H, S and optionally the
// energy-weighted density matrices), the on-site 3-index auxiliary overlaps
// used by diagonal reduction, and a baseline energy E_TB for delta learning.
// No self-consistency; one extra diagonalization after the charge correction
// keeps F C = S C eps exact.

#include <Eigen/Dense>
#include <vector>

#include "unite/ao_basis.hpp"

namespace unite {

struct MeanFieldState {
  Eigen::MatrixXd C, P, F, H, S;
  Eigen::VectorXd eps;  // Hartree, ascending
  int n_occ = 0;
  double e_tb = 0.0;   // Hartree
  double gap0 = 0.0;   // frontier gap of the charge-defining first pass
  bool degenerate_frontier = false;
};

struct FeaturizerConfig {
  bool fmo_features = false;  // add the 8 energy-weighted density channels
};

inline const std::vector<double>& fmo_betas() {
  static const std::vector<double> b = {4.0, 16.0, 64.0, 256.0};
  return b;
}

struct AuxShell {
  int n;         // 1-based within l
  int l;
  double gamma;  // exponent
  double norm;   // unit-normalization constant
};

struct AuxBasisSpec {
  std::vector<AuxShell> shells;  // ordered by l then n; m contiguous per shell
  static const AuxBasisSpec& standard();
  int n_func() const;                       // sum of 2l+1 over shells
  int count(int l) const;                   // shells at degree l
  int func_offset(int shell_index) const;   // flat function offset
};

Eigen::MatrixXd overlap_matrix(const Geometry& g, const AOBasis& basis);

MeanFieldState mean_field(const Geometry& g, const AOBasis& basis);

// Hole/particle energy-weighted density matrices for each beta.
std::pair<std::vector<Eigen::MatrixXd>, std::vector<Eigen::MatrixXd>>
energy_weighted_density(const MeanFieldState& state, const std::vector<double>& betas);

// Q(k) for one element: matrix over the element's local AO dimension for
// each auxiliary function k (flat over shells and m).
std::vector<Eigen::MatrixXd> aux_overlap(int element_z, const AuxBasisSpec& aux);

struct FeaturizeResult {
  NBodyTensor T;
  MeanFieldState mf;
};

FeaturizeResult featurize(const Geometry& g, const FeaturizerConfig& config = {});

}  // namespace unite
