#include "unite/ao_basis.hpp"

#include <stdexcept>

namespace unite {

int Geometry::n_elec() const {
  int z = 0;
  for (int zi : Z) z += zi;
  return z - charge;
}

void Geometry::validate() const {
  if (Z.size() != x.size())
    throw std::invalid_argument("Geometry: Z/coordinate count mismatch");
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = a + 1; b < x.size(); ++b)
      if ((x[a] - x[b]).norm() < 0.1)
        throw std::invalid_argument("Geometry: atoms closer than 0.1 Bohr");
  if (n_elec() % 2 != 0)
    throw std::invalid_argument("Geometry: odd electron count (closed shell only)");
  for (int zi : Z)
    if (!element_known(zi))
      throw std::invalid_argument("Geometry: element not in the toy table");
}

// Artifact constants, not fitted to anything: exponents keep the overlap
// matrix well conditioned at typical bond lengths, on-site energies order
// the shells physically (core below valence below polarization).
const std::vector<ShellSpec>& element_shells(int z) {
  static const std::vector<ShellSpec> h = {{1, 0, 1.00, -0.50}};
  static const std::vector<ShellSpec> c = {
      {1, 0, 4.00, -0.70}, {2, 0, 0.80, -0.45}, {1, 1, 0.80, -0.30}};
  static const std::vector<ShellSpec> n = {
      {1, 0, 5.50, -0.90}, {2, 0, 1.00, -0.55}, {1, 1, 1.00, -0.40}};
  static const std::vector<ShellSpec> o = {
      {1, 0, 7.00, -1.10}, {2, 0, 1.20, -0.65}, {1, 1, 1.20, -0.50}};
  static const std::vector<ShellSpec> heavy = {{1, 0, 6.00, -0.80},
                                               {2, 0, 0.70, -0.40},
                                               {1, 1, 0.70, -0.30},
                                               {1, 2, 0.90, -0.15}};
  switch (z) {
    case 1: return h;
    case 6: return c;
    case 7: return n;
    case 8: return o;
    default:
      if (z > 8) return heavy;
      throw std::invalid_argument("element_shells: unsupported element");
  }
}

double element_zeff(int z) {
  switch (z) {
    case 1: return 1.0;
    case 6: return 4.0;
    case 7: return 5.0;
    case 8: return 6.0;
    default:
      if (z > 8) return 6.0;
      throw std::invalid_argument("element_zeff: unsupported element");
  }
}

bool element_known(int z) { return z == 1 || z == 6 || z == 7 || (z >= 8); }

int max_shells_per_l(int l) {
  switch (l) {
    case 0: return 2;
    case 1: return 1;
    case 2: return 1;
    default: return 0;
  }
}

AOBasis::AOBasis(const Geometry& g) {
  for (int a = 0; a < g.n_atoms(); ++a) {
    atom_offset_.push_back(n_ao_);
    atom_shell_idx_.emplace_back();
    for (const auto& sh : element_shells(g.Z[static_cast<std::size_t>(a)])) {
      atom_shell_idx_.back().push_back(static_cast<int>(shells_.size()));
      shells_.push_back({a, sh.n, sh.l, sh.exponent, n_ao_});
      for (int m = -sh.l; m <= sh.l; ++m) ao_l_.push_back(sh.l);
      n_ao_ += 2 * sh.l + 1;
    }
    atom_nao_.push_back(n_ao_ - atom_offset_.back());
  }
}

const std::vector<int>& AOBasis::atom_shells(int a) const {
  return atom_shell_idx_.at(static_cast<std::size_t>(a));
}
int AOBasis::atom_offset(int a) const { return atom_offset_.at(static_cast<std::size_t>(a)); }
int AOBasis::atom_nao(int a) const { return atom_nao_.at(static_cast<std::size_t>(a)); }

Eigen::Block<const Eigen::MatrixXd> NBodyTensor::block_at(int channel, int A,
                                                          int B) const {
  const auto& M = channels.at(static_cast<std::size_t>(channel));
  return M.block(basis.atom_offset(A), basis.atom_offset(B), basis.atom_nao(A),
                 basis.atom_nao(B));
}

Eigen::MatrixXd basis_rotation_matrix(const AOBasis& basis, const Eigen::Matrix3d& R) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(basis.n_ao(), basis.n_ao());
  std::array<Eigen::MatrixXd, 3> dl;
  for (int l = 0; l <= 2; ++l) dl[static_cast<std::size_t>(l)] = o3::wigner_d(l, R);
  for (const auto& sh : basis.shells())
    D.block(sh.offset, sh.offset, 2 * sh.l + 1, 2 * sh.l + 1) =
        dl[static_cast<std::size_t>(sh.l)];
  return D;
}

NBodyTensor rotate_tensor(const NBodyTensor& T, const Eigen::Matrix3d& R) {
  NBodyTensor out = T;
  for (auto& xa : out.geom.x) xa = R * xa;
  const Eigen::MatrixXd D = basis_rotation_matrix(T.basis, R);
  for (auto& M : out.channels) M = D * M * D.transpose();
  return out;
}

NBodyTensor invert_tensor(const NBodyTensor& T) {
  NBodyTensor out = T;
  for (auto& xa : out.geom.x) xa = -xa;
  Eigen::VectorXd s(T.basis.n_ao());
  for (int i = 0; i < T.basis.n_ao(); ++i)
    s[i] = (T.basis.ao_l()[static_cast<std::size_t>(i)] % 2) ? -1.0 : 1.0;
  for (auto& M : out.channels) M = s.asDiagonal() * M * s.asDiagonal();
  return out;
}

NBodyTensor permute_atoms(const NBodyTensor& T, const std::vector<int>& sigma) {
  const int na = T.geom.n_atoms();
  if (static_cast<int>(sigma.size()) != na)
    throw std::invalid_argument("permute_atoms: wrong permutation length");
  std::vector<int> seen(sigma.size(), 0);
  for (int s : sigma) {
    if (s < 0 || s >= na || seen[static_cast<std::size_t>(s)]++)
      throw std::invalid_argument("permute_atoms: not a bijection");
  }
  NBodyTensor out;
  out.geom.charge = T.geom.charge;
  out.geom.Z.resize(static_cast<std::size_t>(na));
  out.geom.x.resize(static_cast<std::size_t>(na));
  for (int a = 0; a < na; ++a) {
    out.geom.Z[static_cast<std::size_t>(sigma[static_cast<std::size_t>(a)])] = T.geom.Z[static_cast<std::size_t>(a)];
    out.geom.x[static_cast<std::size_t>(sigma[static_cast<std::size_t>(a)])] = T.geom.x[static_cast<std::size_t>(a)];
  }
  out.basis = AOBasis(out.geom);
  out.channel_names = T.channel_names;
  for (const auto& M : T.channels) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(M.rows(), M.cols());
    for (int a = 0; a < na; ++a)
      for (int b = 0; b < na; ++b)
        P.block(out.basis.atom_offset(sigma[static_cast<std::size_t>(a)]),
                out.basis.atom_offset(sigma[static_cast<std::size_t>(b)]),
                T.basis.atom_nao(a), T.basis.atom_nao(b)) =
            M.block(T.basis.atom_offset(a), T.basis.atom_offset(b),
                    T.basis.atom_nao(a), T.basis.atom_nao(b));
    out.channels.push_back(std::move(P));
  }
  return out;
}

}  // namespace unite
