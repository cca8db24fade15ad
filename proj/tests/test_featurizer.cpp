#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "test_helpers.hpp"
#include "unite/featurizer.hpp"
#include "unite/integrals.hpp"

using namespace unite;
using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {
std::mt19937 rng(424201);
double u01() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double gaussian_value(int l, int m, double alpha, const Vector3d& center,
                      const Vector3d& r) {
  const Vector3d d = r - center;
  double s = 0.0;
  for (const auto& t : o3::solid_harmonic_terms(l, m))
    s += t.c * std::pow(d.x(), t.ex) * std::pow(d.y(), t.ey) * std::pow(d.z(), t.ez);
  return gaussian_norm(l, alpha) * s * std::exp(-alpha * d.squaredNorm());
}
}  // namespace

TEST_CASE("single s shell overlaps") {
  Geometry g;
  g.Z = {1};
  g.x = {{0.3, -0.2, 0.9}};
  const AOBasis basis(g);
  const MatrixXd S = overlap_matrix(g, basis);
  CHECK(S.rows() == 1);
  CHECK(S(0, 0) == 1.0);

  // two identical s Gaussians at distance d: off-diagonal exp(-a d^2 / 2)
  const double alpha = 1.0, d = 1.4;
  Geometry h2;
  h2.Z = {1, 1};
  h2.x = {{0, 0, 0}, {d, 0, 0}};
  const MatrixXd S2 = overlap_matrix(h2, AOBasis(h2));
  CHECK(S2(0, 1) == doctest::Approx(std::exp(-alpha * d * d / 2)).epsilon(1e-12));
}

TEST_CASE("overlap matrix positive definite on random molecules") {
  for (int trial = 0; trial < 5; ++trial) {
    const Geometry g = testing::random_molecule(rng);
    const MatrixXd S = overlap_matrix(g, AOBasis(g));
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("two-center overlaps match 3D quadrature on 30 random shell pairs") {
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int l1 = trial % 3, l2 = (trial / 3) % 3;
    const int m1 = std::uniform_int_distribution<int>(-l1, l1)(rng);
    const int m2 = std::uniform_int_distribution<int>(-l2, l2)(rng);
    const double a = 0.4 + 2.0 * u01(), b = 0.4 + 2.0 * u01();
    const Vector3d A(u01(), u01(), u01());
    const Vector3d B = A + Vector3d(1.0 + u01(), u01() - 0.5, u01() - 0.5);
    const double analytic = overlap_prim(l1, m1, a, A, l2, m2, b, B);
    const double numeric = testing::integrate3d(
        [&](const Vector3d& r) {
          return gaussian_value(l1, m1, a, A, r) * gaussian_value(l2, m2, b, B, r);
        },
        (A + B) / 2, 7.5, 110);
    worst = std::max(worst, std::abs(analytic - numeric));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("on-site 3-index overlaps: selection rules and quadrature oracle") {
  const auto& aux = AuxBasisSpec::standard();
  CHECK(aux.n_func() == 16 + 8 * 3 + 4 * 5);
  for (const auto& sh : aux.shells) CHECK(sh.gamma > 0.0);
  // exponents strictly decreasing within each l
  for (std::size_t i = 1; i < aux.shells.size(); ++i)
    if (aux.shells[i].l == aux.shells[i - 1].l)
      CHECK(aux.shells[i].gamma < aux.shells[i - 1].gamma);

  const auto Q = aux_overlap(8, aux);  // oxygen: 2s + 1p
  // s*s rows have no l=1 auxiliary component
  for (int k = 16; k < 16 + 24; ++k) {
    CHECK(Q[static_cast<std::size_t>(k)](0, 0) == 0.0);
    CHECK(Q[static_cast<std::size_t>(k)](0, 1) == 0.0);
    CHECK(Q[static_cast<std::size_t>(k)](1, 1) == 0.0);
  }
  // s x p_z against aux (l=1, m=0): positive, matches quadrature
  const auto& shells = element_shells(8);
  const double a1 = shells[0].exponent;  // 1s
  const double a2 = shells[2].exponent;  // p
  int k10 = -1;  // first l=1 aux shell, m=0 component
  for (std::size_t i = 0; i < aux.shells.size(); ++i)
    if (aux.shells[i].l == 1) {
      k10 = aux.func_offset(static_cast<int>(i)) + 1;
      break;
    }
  REQUIRE(k10 >= 0);
  const double g10 = 32.0;
  const double analytic = Q[static_cast<std::size_t>(k10)](0, 2 + 1 + 0);  // row 1s, col p_z
  const Vector3d zero = Vector3d::Zero();
  const double numeric = testing::integrate3d(
      [&](const Vector3d& r) {
        return gaussian_value(0, 0, a1, zero, r) * gaussian_value(1, 0, a2, zero, r) *
               gaussian_value(1, 0, g10, zero, r);
      },
      zero, 4.0, 130);
  CHECK(analytic > 0.0);
  CHECK(analytic == doctest::Approx(numeric).epsilon(1e-8));

  // p_x * p_y couples only to (l=2, m=-2)-type auxiliaries
  const int px = 2 + 1 + 1, py = 2 + 1 - 1;
  for (std::size_t i = 0; i < aux.shells.size(); ++i) {
    const auto& sh = aux.shells[i];
    for (int m = -sh.l; m <= sh.l; ++m) {
      const double v = Q[static_cast<std::size_t>(aux.func_offset(static_cast<int>(i)) + m + sh.l)](px, py);
      if (sh.l == 2 && m == -2)
        CHECK(std::abs(v) > 1e-8);
      else
        CHECK(v == 0.0);
    }
  }
}

TEST_CASE("aux functions are unit normalized (quadrature)") {
  const auto& aux = AuxBasisSpec::standard();
  for (const int idx : {0, 15, 16, 23, 24, 27}) {
    const auto& sh = aux.shells[static_cast<std::size_t>(idx)];
    const Vector3d zero = Vector3d::Zero();
    const double halfwidth = 7.0 / std::sqrt(sh.gamma) + 1.0;
    const double n2 = testing::integrate3d(
        [&](const Vector3d& r) {
          const double v = gaussian_value(sh.l, -sh.l, sh.gamma, zero, r);
          return v * v;
        },
        zero, halfwidth, 160);
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("mean field satisfies the Roothaan invariants") {
  for (int trial = 0; trial < 5; ++trial) {
    const Geometry g = testing::random_molecule(rng);
    const AOBasis basis(g);
    const MeanFieldState st = mean_field(g, basis);
    CHECK((st.F * st.C - st.S * st.C * st.eps.asDiagonal())
              .cwiseAbs()
              .maxCoeff() < 1e-8);
    CHECK((st.P - st.P.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((st.P * st.S).trace() == doctest::Approx(g.n_elec() / 2.0).epsilon(1e-8));
    for (int i = 1; i < st.eps.size(); ++i) CHECK(st.eps[i] >= st.eps[i - 1]);
  }
}

TEST_CASE("H2 electron count") {
  Geometry h2;
  h2.Z = {1, 1};
  h2.x = {{0, 0, 0}, {1.4, 0, 0}};
  const MeanFieldState st = mean_field(h2, AOBasis(h2));
  CHECK((st.P * st.S).trace() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(st.n_occ == 1);
}

TEST_CASE("rotated geometry: identical spectrum, covariant P") {
  const Geometry g = testing::random_molecule(rng);
  const Matrix3d R = o3::random_rotation(u01(), u01(), u01());
  Geometry gr = g;
  for (auto& x : gr.x) x = R * x;
  const MeanFieldState a = mean_field(g, AOBasis(g));
  const MeanFieldState b = mean_field(gr, AOBasis(gr));
  CHECK((a.eps - b.eps).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(std::abs(a.e_tb - b.e_tb) < 1e-10);
}

TEST_CASE("energy weighted densities") {
  // synthetic 4-orbital spectrum, orthonormal basis
  MeanFieldState st;
  st.C = MatrixXd::Identity(4, 4);
  st.S = MatrixXd::Identity(4, 4);
  st.eps = VectorXd(4);
  st.eps << -1.0, -0.5, 0.2, 0.9;
  st.n_occ = 2;
  auto [dh, dp] = energy_weighted_density(st, {4.0});
  CHECK(dh[0](0, 0) == doctest::Approx(std::exp(-4.0 * 0.5)).epsilon(1e-12));
  CHECK(dh[0](1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dp[0](2, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dp[0](3, 3) == doctest::Approx(std::exp(-4.0 * 0.7)).epsilon(1e-12));

  // beta -> infinity: HOMO projector; beta = 0: P
  bool projector_checked = false;
  for (int trial = 0; trial < 10 && !projector_checked; ++trial) {
    const Geometry g = testing::random_molecule(rng);
    const MeanFieldState mf = mean_field(g, AOBasis(g));
    auto [dhi, dpi] = energy_weighted_density(mf, {1e6, 0.0});
    CHECK((dhi[1] - mf.P).cwiseAbs().maxCoeff() < 1e-12);
    // the projector limit needs the HOMO isolated within the occupied manifold
    if (mf.degenerate_frontier || mf.n_occ < 2 ||
        mf.eps[mf.n_occ - 1] - mf.eps[mf.n_occ - 2] < 1e-4)
      continue;
    const MatrixXd homo =
        mf.C.col(mf.n_occ - 1) * mf.C.col(mf.n_occ - 1).transpose();
    CHECK((dhi[0] - homo).cwiseAbs().maxCoeff() < 1e-6);
    projector_checked = true;
  }
  CHECK(projector_checked);

  MeanFieldState novirt = st;
  novirt.n_occ = 4;
  CHECK_THROWS_AS(energy_weighted_density(novirt, {4.0}), std::invalid_argument);
}

TEST_CASE("featurize channel counts and translation invariance") {
  Geometry g = testing::random_molecule(rng);
  testing::snap_to_grid(g);
  const FeaturizeResult r = featurize(g);
  CHECK(r.T.n_channels() == 4);
  FeaturizerConfig fmo;
  fmo.fmo_features = true;
  CHECK(featurize(g, fmo).T.n_channels() == 12);

  Geometry shifted = g;
  const Vector3d x0(13.75, -4.125, 0.875);  // exact on the same grid
  for (auto& x : shifted.x) x += x0;
  const FeaturizeResult rs = featurize(shifted);
  for (int c = 0; c < r.T.n_channels(); ++c)
    CHECK((r.T.channels[c] - rs.T.channels[c]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.mf.e_tb == rs.mf.e_tb);
}

TEST_CASE("featurizer equivariance: rotation and parity") {
  FeaturizerConfig fmo;
  fmo.fmo_features = true;
  for (int trial = 0; trial < 5; ++trial) {
    const Geometry g = testing::random_molecule(rng);
    const Matrix3d R = o3::random_rotation(u01(), u01(), u01());
    Geometry gr = g, gi = g;
    for (auto& x : gr.x) x = R * x;
    for (auto& x : gi.x) x = -x;
    const NBodyTensor T = featurize(g, fmo).T;
    const NBodyTensor Trot = rotate_tensor(T, R);
    const NBodyTensor Tref = featurize(gr, fmo).T;
    const NBodyTensor Tinv = invert_tensor(T);
    const NBodyTensor Tiref = featurize(gi, fmo).T;
    for (int c = 0; c < T.n_channels(); ++c) {
      CHECK((Trot.channels[c] - Tref.channels[c]).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((Tinv.channels[c] - Tiref.channels[c]).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("E_TB symmetry and extensivity") {
  const Geometry g = testing::random_molecule(rng, 4, 6);
  const double e0 = featurize(g).mf.e_tb;

  Geometry perm = g;
  std::swap(perm.Z[0], perm.Z[2]);
  std::swap(perm.x[0], perm.x[2]);
  CHECK(std::abs(featurize(perm).mf.e_tb - e0) < 1e-10);

  // far-separated dimer: block-diagonal features, doubled energy
  Geometry dimer = g;
  for (std::size_t a = 0; a < g.Z.size(); ++a) {
    dimer.Z.push_back(g.Z[a]);
    dimer.x.push_back(g.x[a] + Vector3d(45.0, 0, 0));
  }
  const FeaturizeResult rd = featurize(dimer);
  CHECK(std::abs(rd.mf.e_tb - 2.0 * e0) < 1e-8);
  const int na = g.n_atoms();
  for (int c = 0; c < rd.T.n_channels(); ++c)
    for (int a = 0; a < na; ++a)
      for (int b = na; b < 2 * na; ++b)
        CHECK(rd.T.block_at(c, a, b).cwiseAbs().maxCoeff() == 0.0);
}
