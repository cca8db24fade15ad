#pragma once

// Task-specific readout layers on top of the final representations, plus
// real-space density evaluation, the epsilon_rho metric and cube export.
// Every head is templated on the scalar type so it differentiates with the
// same tape machinery as the network body.

#include <array>
#include <string>
#include <vector>

#include "unite/net.hpp"

namespace unite {

enum class HeadKind { energy, dipole, polarizability, mo, r2, density };

enum class MoAttentionKind { linear, exponential };

HeadKind head_kind_from_string(const std::string& s);
std::string to_string(HeadKind k);

// Registers the pooling parameters for one head; element-specific arrays are
// created for every element in `elements`.
void add_head_params(ParamStore& store, HeadKind kind, const ModelConfig& cfg,
                     const std::vector<int>& elements, unsigned seed);

// Atom-centered density-fitting coefficients, one flat block per atom laid
// out exactly like AuxBasisSpec function order.
template <class T>
struct DensityCoeffs {
  std::vector<std::vector<T>> d;
};

// Tagged readout value; the tag always matches the configured head.
struct Prediction {
  HeadKind kind = HeadKind::energy;
  double scalar = 0.0;
  Eigen::Vector3d vec = Eigen::Vector3d::Zero();
  DensityCoeffs<double> density;
};

namespace detail {

template <class T>
T dot_bias(const std::vector<T>& w, const std::vector<T>& x) {
  T s = T(0.0);
  for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x[k];
  return s;
}

template <class T>
const std::vector<T>& element_bias(const TypedParams<T>& P, int z) {
  const std::string name = "head.bz.z" + std::to_string(z);
  if (!P.has(name)) throw std::out_of_range("pooling: no bias for element " + std::to_string(z));
  return P(name);
}

// scalar channel values (h_A)_{l=0,p=+1}
template <class T>
std::vector<T> scalar_channels(const Rep<T>& h, int a) {
  std::vector<T> x(static_cast<std::size_t>(h.spec.count(0, 0)));
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = h.at(a, 0, 0, static_cast<int>(c), 0);
  return x;
}

// one Cartesian component of the degree-1 block; m-order (-1,0,+1) = (y,z,x)
template <class T>
std::vector<T> vector_channels(const Rep<T>& h, int a, int cart) {
  const int mi = cart == 0 ? 2 : (cart == 1 ? 0 : 1);
  std::vector<T> x(static_cast<std::size_t>(h.spec.count(1, 0)));
  for (std::size_t c = 0; c < x.size(); ++c) x[c] = h.at(a, 1, 0, static_cast<int>(c), mi);
  return x;
}

}  // namespace detail

template <class T>
T energy_pool(const Rep<T>& h, const std::vector<int>& Z, const TypedParams<T>& P) {
  const std::vector<T>& Wo = P("head.Wo");
  T y = T(0.0);
  for (int a = 0; a < h.n_atoms; ++a) {
    y += detail::dot_bias(Wo, detail::neuron_norms(h, a));
    y += detail::element_bias(P, Z[static_cast<std::size_t>(a)])[0];
  }
  return y;
}

template <class T>
std::array<T, 3> dipole_pool(const Rep<T>& h, const std::vector<Eigen::Vector3d>& x,
                             const std::vector<int>& Z, const TypedParams<T>& P) {
  const std::vector<T>& W0 = P("head.Wo0");
  const std::vector<T>& W1 = P("head.Wo1");
  std::vector<T> qp(static_cast<std::size_t>(h.n_atoms));
  T sum = T(0.0);
  for (int a = 0; a < h.n_atoms; ++a) {
    qp[static_cast<std::size_t>(a)] = detail::dot_bias(W0, detail::scalar_channels(h, a)) +
                                      detail::element_bias(P, Z[static_cast<std::size_t>(a)])[0];
    sum += qp[static_cast<std::size_t>(a)];
  }
  const T dq = sum / T(static_cast<double>(h.n_atoms));
  std::array<T, 3> mu = {T(0.0), T(0.0), T(0.0)};
  for (int a = 0; a < h.n_atoms; ++a) {
    const T q = qp[static_cast<std::size_t>(a)] - dq;
    for (int k = 0; k < 3; ++k)
      mu[static_cast<std::size_t>(k)] +=
          T(x[static_cast<std::size_t>(a)][k]) * q +
          detail::dot_bias(W1, detail::vector_channels(h, a, k));
  }
  return mu;
}

template <class T>
T polarizability_pool(const Rep<T>& h, const std::vector<Eigen::Vector3d>& x,
                      const std::vector<int>& Z, const TypedParams<T>& P) {
  const std::vector<T>& W0 = P("head.Wo0");
  const std::vector<T>& W1 = P("head.Wo1");
  std::vector<std::array<T, 3>> pp(static_cast<std::size_t>(h.n_atoms));
  std::array<T, 3> dp = {T(0.0), T(0.0), T(0.0)};
  for (int a = 0; a < h.n_atoms; ++a)
    for (int k = 0; k < 3; ++k) {
      pp[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] =
          detail::dot_bias(W1, detail::vector_channels(h, a, k));
      dp[static_cast<std::size_t>(k)] += pp[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)];
    }
  for (int k = 0; k < 3; ++k) dp[static_cast<std::size_t>(k)] /= T(static_cast<double>(h.n_atoms));
  T y = T(0.0);
  for (int a = 0; a < h.n_atoms; ++a) {
    y += detail::dot_bias(W0, detail::scalar_channels(h, a)) +
         detail::element_bias(P, Z[static_cast<std::size_t>(a)])[0];
    for (int k = 0; k < 3; ++k)
      y += T(x[static_cast<std::size_t>(a)][k]) *
           (pp[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] - dp[static_cast<std::size_t>(k)]);
  }
  return y;
}

template <class T>
T mo_pool(const Rep<T>& h, const std::vector<int>& Z, const TypedParams<T>& P,
          MoAttentionKind kind = MoAttentionKind::exponential) {
  using std::exp;
  using ad::exp;
  const std::vector<T>& Wa = P("head.Wa");
  const std::vector<T>& Wo = P("head.Wo");
  std::vector<T> w(static_cast<std::size_t>(h.n_atoms));
  std::vector<T> val(static_cast<std::size_t>(h.n_atoms));
  T denom = T(0.0);
  for (int a = 0; a < h.n_atoms; ++a) {
    const std::vector<T> nrm = detail::neuron_norms(h, a);
    T s = detail::dot_bias(Wa, nrm);
    if (kind == MoAttentionKind::exponential) s = exp(s);
    w[static_cast<std::size_t>(a)] = s;
    denom += s;
    val[static_cast<std::size_t>(a)] =
        detail::dot_bias(Wo, nrm) + detail::element_bias(P, Z[static_cast<std::size_t>(a)])[0];
  }
  if (kind == MoAttentionKind::linear && std::abs(value_of(denom)) < 1e-12)
    throw std::domain_error("mo_pool: linear attention denominator vanishes");
  T y = T(0.0);
  for (int a = 0; a < h.n_atoms; ++a)
    y += w[static_cast<std::size_t>(a)] / denom * val[static_cast<std::size_t>(a)];
  return y;
}

template <class T>
T r2_pool(const Rep<T>& h, const std::vector<Eigen::Vector3d>& x,
          const std::vector<int>& Z, const TypedParams<T>& P) {
  const std::vector<T>& W0 = P("head.Wo0");
  const std::vector<T>& W1 = P("head.Wo1");
  const std::vector<T>& W2 = P("head.Wo2");
  std::vector<T> q(static_cast<std::size_t>(h.n_atoms));
  T qsum = T(0.0);
  std::array<T, 3> num = {T(0.0), T(0.0), T(0.0)};
  for (int a = 0; a < h.n_atoms; ++a) {
    q[static_cast<std::size_t>(a)] = detail::dot_bias(W0, detail::scalar_channels(h, a)) +
                                     detail::element_bias(P, Z[static_cast<std::size_t>(a)])[0];
    qsum += q[static_cast<std::size_t>(a)];
    for (int k = 0; k < 3; ++k)
      num[static_cast<std::size_t>(k)] +=
          T(x[static_cast<std::size_t>(a)][k]) * q[static_cast<std::size_t>(a)] +
          detail::dot_bias(W1, detail::vector_channels(h, a, k));
  }
  if (std::abs(value_of(qsum)) < 1e-8)
    throw std::domain_error("r2_pool: total charge too small for the centroid");
  std::array<T, 3> r0;
  for (int k = 0; k < 3; ++k) r0[static_cast<std::size_t>(k)] = num[static_cast<std::size_t>(k)] / qsum;
  T y = T(0.0);
  for (int a = 0; a < h.n_atoms; ++a) {
    T d2 = T(0.0);
    for (int k = 0; k < 3; ++k) {
      const T d = T(x[static_cast<std::size_t>(a)][k]) - r0[static_cast<std::size_t>(k)];
      d2 += d * d;
    }
    y += d2 * q[static_cast<std::size_t>(a)] + detail::dot_bias(W2, detail::scalar_channels(h, a));
  }
  return y;
}

template <class T>
DensityCoeffs<T> density_pool(const Rep<T>& h, const std::vector<int>& Z,
                              const TypedParams<T>& P) {
  const AuxBasisSpec& aux = AuxBasisSpec::standard();
  DensityCoeffs<T> out;
  out.d.resize(static_cast<std::size_t>(h.n_atoms));
  for (int a = 0; a < h.n_atoms; ++a) {
    const int z = Z[static_cast<std::size_t>(a)];
    std::vector<T>& da = out.d[static_cast<std::size_t>(a)];
    da.assign(static_cast<std::size_t>(aux.n_func()), T(0.0));
    for (std::size_t si = 0; si < aux.shells.size(); ++si) {
      const AuxShell& sh = aux.shells[si];
      const std::string name =
          "head.Wd.z" + std::to_string(z) + ".l" + std::to_string(sh.l);
      if (!P.has(name))
        throw std::out_of_range("density_pool: no weights for element " + std::to_string(z));
      const std::vector<T>& W = P(name);
      const int cnt = h.spec.count(sh.l, 0);
      const int base = aux.func_offset(static_cast<int>(si));
      for (int mi = 0; mi < 2 * sh.l + 1; ++mi) {
        T s = T(0.0);
        for (int c = 0; c < cnt; ++c)
          s += W[static_cast<std::size_t>((sh.n - 1) * cnt + c)] * h.at(a, sh.l, 0, c, mi);
        da[static_cast<std::size_t>(base + mi)] = s;
      }
    }
  }
  return out;
}

// rho(r) = sum_A sum_nlm d_A^nlm chi_A^nlm(r) over arbitrary sample points.
std::vector<double> density_evaluate(const DensityCoeffs<double>& d, const Geometry& g,
                                     const std::vector<Eigen::Vector3d>& points,
                                     bool parallel = false);

// Overlap matrix of the density-fitting functions over all atoms (the S^rho
// quadratic form used by the density loss), flat DensityCoeffs layout.
Eigen::MatrixXd density_overlap(const Geometry& g);

// Analytic integral of each density-fitting function (only s functions are
// nonzero), flat layout for one atom.
std::vector<double> density_function_integrals();

// Rectilinear voxel grid covering the molecule with a margin.
struct DensityGrid {
  Eigen::Vector3d origin;
  double spacing = 0.2;
  std::array<int, 3> n{};
  std::vector<Eigen::Vector3d> points() const;
  double voxel_volume() const { return spacing * spacing * spacing; }
};

DensityGrid make_density_grid(const Geometry& g, double spacing = 0.2, double margin = 5.0);

// 100 * integral |rho - rho_hat| / integral |rho| over the same samples;
// points where |rho_ref| < cutoff are excluded, mirroring the evaluation
// convention for density errors.
double epsilon_rho(const std::vector<double>& rho_ref, const std::vector<double>& rho_pred,
                   double cutoff = 1e-5);

// Gaussian cube file (Bohr units, Fortran-order field values).
void write_cube(const std::string& path, const Geometry& g, const DensityGrid& grid,
                const std::vector<double>& field, const std::string& title);

}  // namespace unite
