#include "unite/featurizer.hpp"

#include <cmath>
#include <stdexcept>

#include "unite/integrals.hpp"

namespace unite {

namespace {

// Artifact model constants (not fitted): Wolfsberg-Helmholz factor and the
// Mulliken-charge hardness of the one-shot correction.
constexpr double kWH = 1.75;
constexpr double kHardness = 0.4;
constexpr double kFlush = 1e-12;

struct EigResult {
  Eigen::MatrixXd C;
  Eigen::VectorXd eps;
};

// Generalized symmetric problem via the Cholesky factor of S.
EigResult solve_roothaan(const Eigen::MatrixXd& Fm, const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::MatrixXd Ft =
      L.triangularView<Eigen::Lower>().solve(
          L.triangularView<Eigen::Lower>()
              .solve(Fm.transpose())
              .transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ft);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("mean_field: eigensolver failure");
  EigResult r;
  r.eps = es.eigenvalues();
  r.C = L.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors());
  return r;
}

void flush_small(Eigen::MatrixXd& M) {
  M = M.unaryExpr([](double v) { return std::abs(v) < kFlush ? 0.0 : v; });
}

}  // namespace

const AuxBasisSpec& AuxBasisSpec::standard() {
  static const AuxBasisSpec spec = [] {
    AuxBasisSpec s;
    for (int n = 1; n <= 16; ++n) {
      const double g = 128.0 * std::pow(0.5, n - 1);
      s.shells.push_back({n, 0, g, gaussian_norm(0, g)});
    }
    for (int n = 1; n <= 8; ++n) {
      const double g = 32.0 * std::pow(0.25, n - 1);
      s.shells.push_back({n, 1, g, gaussian_norm(1, g)});
    }
    for (int n = 1; n <= 4; ++n) {
      const double g = 4.0 * std::pow(0.25, n - 1);
      s.shells.push_back({n, 2, g, gaussian_norm(2, g)});
    }
    return s;
  }();
  return spec;
}

int AuxBasisSpec::n_func() const {
  int n = 0;
  for (const auto& sh : shells) n += 2 * sh.l + 1;
  return n;
}

int AuxBasisSpec::count(int l) const {
  int n = 0;
  for (const auto& sh : shells) n += (sh.l == l) ? 1 : 0;
  return n;
}

int AuxBasisSpec::func_offset(int shell_index) const {
  int off = 0;
  for (int i = 0; i < shell_index; ++i) off += 2 * shells[static_cast<std::size_t>(i)].l + 1;
  return off;
}

Eigen::MatrixXd overlap_matrix(const Geometry& g, const AOBasis& basis) {
  const auto& shells = basis.shells();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(basis.n_ao(), basis.n_ao());
  for (std::size_t i = 0; i < shells.size(); ++i)
    for (std::size_t j = i; j < shells.size(); ++j) {
      const auto& a = shells[i];
      const auto& b = shells[j];
      for (int ma = -a.l; ma <= a.l; ++ma)
        for (int mb = -b.l; mb <= b.l; ++mb) {
          const double v = overlap_prim(
              a.l, ma, a.exponent, g.x[static_cast<std::size_t>(a.atom)], b.l,
              mb, b.exponent, g.x[static_cast<std::size_t>(b.atom)]);
          S(a.offset + ma + a.l, b.offset + mb + b.l) = v;
          S(b.offset + mb + b.l, a.offset + ma + a.l) = v;
        }
    }
  flush_small(S);
  S.diagonal().setOnes();  // normalized primitives, exact by construction
  return S;
}

MeanFieldState mean_field(const Geometry& g, const AOBasis& basis) {
  g.validate();
  const int n_elec = g.n_elec();
  if (n_elec < 2) throw std::invalid_argument("mean_field: need at least 2 electrons");
  MeanFieldState st;
  st.S = overlap_matrix(g, basis);

  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(st.S, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0 || hi / lo > 1e10)
      throw std::runtime_error("mean_field: overlap matrix near singular");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(st.S);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("mean_field: Cholesky failure");

  // per-AO on-site energies
  Eigen::VectorXd e(basis.n_ao());
  for (const auto& sh : basis.shells()) {
    const auto& table = element_shells(g.Z[static_cast<std::size_t>(sh.atom)]);
    double onsite = 0.0;
    for (const auto& ts : table)
      if (ts.l == sh.l && ts.n == sh.n) onsite = ts.onsite_e;
    for (int m = -sh.l; m <= sh.l; ++m) e[sh.offset + m + sh.l] = onsite;
  }
  st.H = 0.5 * kWH *
         (e.replicate(1, basis.n_ao()) + e.transpose().replicate(basis.n_ao(), 1))
             .cwiseProduct(st.S);
  st.H.diagonal() = e;

  st.n_occ = n_elec / 2;
  if (st.n_occ > basis.n_ao())
    throw std::runtime_error("mean_field: more electron pairs than basis functions");

  // first pass: Hueckel only, gives Mulliken charges
  const EigResult first = solve_roothaan(st.H, llt);
  if (st.n_occ > 0 && st.n_occ < basis.n_ao())
    st.gap0 = first.eps[st.n_occ] - first.eps[st.n_occ - 1];
  const Eigen::MatrixXd P0 = first.C.leftCols(st.n_occ) * first.C.leftCols(st.n_occ).transpose();
  const Eigen::MatrixXd PS = P0 * st.S;
  Eigen::VectorXd v(g.n_atoms());
  for (int a = 0; a < g.n_atoms(); ++a) {
    double pop = 0.0;
    for (int i = 0; i < basis.atom_nao(a); ++i)
      pop += 2.0 * PS(basis.atom_offset(a) + i, basis.atom_offset(a) + i);
    v[a] = kHardness * (element_zeff(g.Z[static_cast<std::size_t>(a)]) - pop);
  }
  Eigen::VectorXd vao(basis.n_ao());
  for (const auto& sh : basis.shells())
    for (int m = -sh.l; m <= sh.l; ++m) vao[sh.offset + m + sh.l] = v[sh.atom];
  st.F = st.H + 0.5 *
                    (vao.replicate(1, basis.n_ao()) +
                     vao.transpose().replicate(basis.n_ao(), 1))
                        .cwiseProduct(st.S);

  // second pass: the reported orbitals diagonalize F exactly (single shot,
  // no further self-consistency)
  const EigResult fin = solve_roothaan(st.F, llt);
  st.C = fin.C;
  st.eps = fin.eps;
  st.P = st.C.leftCols(st.n_occ) * st.C.leftCols(st.n_occ).transpose();

  if (st.n_occ < basis.n_ao() && st.n_occ > 0)
    st.degenerate_frontier =
        std::abs(st.eps[st.n_occ] - st.eps[st.n_occ - 1]) < 1e-8;

  double e_nuc = 0.0;
  for (int a = 0; a < g.n_atoms(); ++a)
    for (int b = a + 1; b < g.n_atoms(); ++b) {
      const double r = (g.x[static_cast<std::size_t>(a)] - g.x[static_cast<std::size_t>(b)]).norm();
      e_nuc += element_zeff(g.Z[static_cast<std::size_t>(a)]) *
               element_zeff(g.Z[static_cast<std::size_t>(b)]) * std::exp(-r) / r;
    }
  st.e_tb = 2.0 * st.eps.head(st.n_occ).sum() + e_nuc;
  return st;
}

std::pair<std::vector<Eigen::MatrixXd>, std::vector<Eigen::MatrixXd>>
energy_weighted_density(const MeanFieldState& st, const std::vector<double>& betas) {
  const int nmo = static_cast<int>(st.eps.size());
  if (st.n_occ < 1) throw std::invalid_argument("energy_weighted_density: no occupied orbitals");
  if (st.n_occ >= nmo)
    throw std::invalid_argument("energy_weighted_density: no virtual orbitals");
  const double e_homo = st.eps[st.n_occ - 1];
  const double e_lumo = st.eps[st.n_occ];
  std::vector<Eigen::MatrixXd> dh, dp;
  for (const double beta : betas) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(st.C.rows(), st.C.rows());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(st.C.rows(), st.C.rows());
    for (int i = 0; i < st.n_occ; ++i)
      h += std::exp(-beta * (e_homo - st.eps[i])) * st.C.col(i) * st.C.col(i).transpose();
    for (int a = st.n_occ; a < nmo; ++a)
      p += std::exp(-beta * (st.eps[a] - e_lumo)) * st.C.col(a) * st.C.col(a).transpose();
    dh.push_back(std::move(h));
    dp.push_back(std::move(p));
  }
  return {std::move(dh), std::move(dp)};
}

std::vector<Eigen::MatrixXd> aux_overlap(int element_z, const AuxBasisSpec& aux) {
  const auto& shells = element_shells(element_z);
  int nao = 0;
  for (const auto& sh : shells) nao += 2 * sh.l + 1;
  std::vector<Eigen::MatrixXd> Q(static_cast<std::size_t>(aux.n_func()),
                                 Eigen::MatrixXd::Zero(nao, nao));
  int k = 0;
  for (const auto& ax : aux.shells) {
    for (int ma = -ax.l; ma <= ax.l; ++ma, ++k) {
      int off1 = 0;
      for (const auto& s1 : shells) {
        int off2 = 0;
        for (const auto& s2 : shells) {
          for (int m1 = -s1.l; m1 <= s1.l; ++m1)
            for (int m2 = -s2.l; m2 <= s2.l; ++m2) {
              const double raw = onsite_triple_raw(
                  s1.l, m1, s2.l, m2, ax.l, ma,
                  s1.exponent + s2.exponent + ax.gamma);
              if (raw == 0.0) continue;
              Q[static_cast<std::size_t>(k)](off1 + m1 + s1.l, off2 + m2 + s2.l) =
                  gaussian_norm(s1.l, s1.exponent) *
                  gaussian_norm(s2.l, s2.exponent) * ax.norm * raw;
            }
          off2 += 2 * s2.l + 1;
        }
        off1 += 2 * s1.l + 1;
      }
    }
  }
  return Q;
}

FeaturizeResult featurize(const Geometry& g, const FeaturizerConfig& config) {
  FeaturizeResult r;
  r.T.geom = g;
  r.T.basis = AOBasis(g);
  r.mf = mean_field(g, r.T.basis);
  r.T.channel_names = {"F", "P", "H", "S"};
  r.T.channels = {r.mf.F, r.mf.P, r.mf.H, r.mf.S};
  if (config.fmo_features) {
    auto [dh, dp] = energy_weighted_density(r.mf, fmo_betas());
    for (std::size_t i = 0; i < dh.size(); ++i) {
      r.T.channel_names.push_back("D_h(" + std::to_string(fmo_betas()[i]) + ")");
      r.T.channels.push_back(std::move(dh[i]));
      r.T.channel_names.push_back("D_p(" + std::to_string(fmo_betas()[i]) + ")");
      r.T.channels.push_back(std::move(dp[i]));
    }
  }
  for (auto& M : r.T.channels) flush_small(M);
  return r;
}

}  // namespace unite
