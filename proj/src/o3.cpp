#include "unite/o3.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace unite::o3 {

namespace {

constexpr double kPi = std::numbers::pi;

long double factorial(int n) {
  static const auto table = [] {
    std::array<long double, 71> t{};
    t[0] = 1.0L;
    for (int i = 1; i <= 70; ++i) t[i] = t[i - 1] * i;
    return t;
  }();
  if (n < 0 || n > 70) throw std::domain_error("factorial range");
  return table[n];
}

long double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0L;
  return factorial(n) / (factorial(k) * factorial(n - k));
}

// (n)!! with (-1)!! = 1
long double dfact(int n) {
  long double r = 1.0L;
  for (int i = n; i > 1; i -= 2) r *= i;
  return r;
}

// Exact integral of x^a y^b z^c over the unit sphere surface.
double monomial_sphere_integral(int a, int b, int c) {
  if (a % 2 || b % 2 || c % 2) return 0.0;
  const long double num = dfact(a - 1) * dfact(b - 1) * dfact(c - 1);
  return static_cast<double>(4.0L * kPi * num / dfact(a + b + c + 1));
}

// Polynomial table for the real solid harmonics, built from the standard
// closed form: S_lm = N Sum_{t,u,v} C_tuv x^.. y^.. z^.. with half-integer v
// handled through w = 2v.
std::vector<Monomial> build_terms(int l, int m) {
  const int am = std::abs(m);
  const int w0 = (m < 0) ? 1 : 0;  // parity of w = 2v
  const long double norm =
      (1.0L / (std::pow(2.0L, am) * factorial(l))) *
      sqrtl(2.0L * factorial(l + am) * factorial(l - am) /
            (m == 0 ? 2.0L : 1.0L));
  std::map<std::array<int, 3>, long double> acc;
  for (int t = 0; 2 * t <= l - am; ++t) {
    for (int u = 0; u <= t; ++u) {
      for (int w = w0; w <= am; w += 2) {
        const long double c = std::pow(-1.0L, t + (w - w0) / 2) *
                              std::pow(0.25L, t) * binom(l, t) *
                              binom(l - t, am + t) * binom(t, u) * binom(am, w);
        if (c == 0.0L) continue;
        const int px = 2 * t + am - 2 * u - w;
        const int py = 2 * u + w;
        const int pz = l - 2 * t - am;
        acc[{px, py, pz}] += norm * c;
      }
    }
  }
  std::vector<Monomial> out;
  for (const auto& [e, c] : acc) {
    const double cd = static_cast<double>(c);
    if (cd != 0.0) out.push_back({e[0], e[1], e[2], cd});
  }
  return out;
}

const std::vector<Monomial>& terms_cached(int l, int m) {
  static const auto all = [] {
    std::vector<std::vector<std::vector<Monomial>>> t(kTableLMax + 1);
    for (int l = 0; l <= kTableLMax; ++l) {
      t[static_cast<std::size_t>(l)].resize(static_cast<std::size_t>(2 * l + 1));
      for (int m = -l; m <= l; ++m)
        t[static_cast<std::size_t>(l)][static_cast<std::size_t>(m + l)] = build_terms(l, m);
    }
    return t;
  }();
  if (l < 0 || l > kTableLMax || std::abs(m) > l)
    throw std::domain_error("solid_harmonic_terms: unsupported degree");
  return all[static_cast<std::size_t>(l)][static_cast<std::size_t>(m + l)];
}

// ---- complex-basis machinery, used only while building the CG tables ----

// Associated Legendre with the Condon-Shortley phase folded in.
double assoc_legendre_cs(int l, int m, double x) {
  double pmm = 1.0;
  if (m > 0) {
    const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
    pmm = static_cast<double>(std::pow(-1.0L, m) * dfact(2 * m - 1)) *
          std::pow(s, m);
  }
  if (l == m) return pmm;
  double pmmp1 = x * (2 * m + 1) * pmm;
  if (l == m + 1) return pmmp1;
  double pll = 0.0;
  for (int ll = m + 2; ll <= l; ++ll) {
    pll = (x * (2 * ll - 1) * pmmp1 - (ll + m - 1) * pmm) / (ll - m);
    pmm = pmmp1;
    pmmp1 = pll;
  }
  return pll;
}

std::complex<double> complex_sh(int l, int mu, double ct, double phi) {
  const int am = std::abs(mu);
  const double norm = std::sqrt((2 * l + 1) / (4.0 * kPi) *
                                static_cast<double>(factorial(l - am) / factorial(l + am)));
  const double p = norm * assoc_legendre_cs(l, am, ct);
  std::complex<double> y = p * std::exp(std::complex<double>(0.0, am * phi));
  if (mu < 0) y = (am % 2 ? -1.0 : 1.0) * std::conj(y);
  return y;
}

struct Quadrature {
  std::vector<double> ct, wt;  // Gauss-Legendre on cos(theta)
  int nphi;
};

Quadrature sphere_quadrature(int n, int nphi) {
  Quadrature q;
  q.nphi = nphi;
  for (int i = 1; i <= n; ++i) {
    double x = std::cos(kPi * (i - 0.25) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      // Legendre P_n and derivative by recurrence
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (x * p1 - p0) / (x * x - 1.0);
    q.ct.push_back(x);
    q.wt.push_back(2.0 / ((1.0 - x * x) * dp * dp));
  }
  return q;
}

// Racah closed form for complex-basis CG coefficients, Condon-Shortley phase.
double cg_complex(int l1, int m1, int l2, int m2, int L, int M) {
  if (m1 + m2 != M) return 0.0;
  if (L < std::abs(l1 - l2) || L > l1 + l2) return 0.0;
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(M) > L) return 0.0;
  const long double pref =
      sqrtl((2.0L * L + 1) * factorial(l1 + l2 - L) * factorial(l1 - l2 + L) *
            factorial(-l1 + l2 + L) / factorial(l1 + l2 + L + 1)) *
      sqrtl(factorial(L + M) * factorial(L - M) * factorial(l1 - m1) *
            factorial(l1 + m1) * factorial(l2 - m2) * factorial(l2 + m2));
  const int kmin = std::max({0, l2 - L - m1, l1 - L + m2});
  const int kmax = std::min({l1 + l2 - L, l1 - m1, l2 + m2});
  long double s = 0.0L;
  for (int k = kmin; k <= kmax; ++k) {
    s += std::pow(-1.0L, k) /
         (factorial(k) * factorial(l1 + l2 - L - k) * factorial(l1 - m1 - k) *
          factorial(l2 + m2 - k) * factorial(L - l2 + m1 + k) *
          factorial(L - l1 - m2 + k));
  }
  return static_cast<double>(pref * s);
}

// Row-normalized real<->complex change of basis for degree l, recovered by
// projecting this implementation's RSH onto the orthonormal complex basis.
// This pins every phase convention to the actual RSH code.
using Umat = std::vector<std::array<std::complex<double>, 17>>;  // [m+l][mu+l]

Umat transform_matrix(int l, const Quadrature& q) {
  Umat u(static_cast<std::size_t>(2 * l + 1));
  for (int m = -l; m <= l; ++m) {
    std::array<std::complex<double>, 17> row{};
    for (std::size_t j = 0; j < q.ct.size(); ++j) {
      const double ct = q.ct[j], st = std::sqrt(1.0 - ct * ct);
      for (int k = 0; k < q.nphi; ++k) {
        const double phi = 2.0 * kPi * k / q.nphi;
        const Eigen::Vector3d r(st * std::cos(phi), st * std::sin(phi), ct);
        const double yr = real_spherical_harmonic(l, m, r);
        const double w = q.wt[j] * (2.0 * kPi / q.nphi);
        for (int mu = -l; mu <= l; ++mu)
          row[static_cast<std::size_t>(mu + l)] +=
              w * yr * std::conj(complex_sh(l, mu, ct, phi));
      }
    }
    double n2 = 0.0;
    for (int mu = -l; mu <= l; ++mu) n2 += std::norm(row[static_cast<std::size_t>(mu + l)]);
    const double n = std::sqrt(n2);
    // sanity: our RSH per degree are uniformly normalized, |row| = sqrt(norm2)
    if (std::abs(n2 - rsh_sphere_norm2(l)) > 1e-10 * std::max(1.0, n2))
      throw std::logic_error("o3: RSH normalization mismatch in basis transform");
    for (auto& c : row) {
      c /= n;
      if (std::abs(c.real()) < 1e-12) c.real(0.0);
      if (std::abs(c.imag()) < 1e-12) c.imag(0.0);
    }
    u[static_cast<std::size_t>(m + l)] = row;
  }
  return u;
}

std::size_t flat(int l1, int m1, int l2, int m2, int l, int m) {
  const auto d2 = static_cast<std::size_t>(2 * l2 + 1);
  return (static_cast<std::size_t>(m1 + l1) * d2 + static_cast<std::size_t>(m2 + l2)) *
             static_cast<std::size_t>(2 * l + 1) +
         static_cast<std::size_t>(m + l);
}

}  // namespace

const std::vector<Monomial>& solid_harmonic_terms(int l, int m) {
  return terms_cached(l, m);
}

double real_spherical_harmonic(int l, int m, const Eigen::Vector3d& r) {
  const double n = r.norm();
  if (n == 0.0) throw std::domain_error("real_spherical_harmonic: zero vector");
  const double x = r.x() / n, y = r.y() / n, z = r.z() / n;
  double s = 0.0;
  for (const auto& t : terms_cached(l, m))
    s += t.c * std::pow(x, t.ex) * std::pow(y, t.ey) * std::pow(z, t.ez);
  return s;
}

Eigen::VectorXd rsh_vector(int l, const Eigen::Vector3d& r) {
  Eigen::VectorXd v(2 * l + 1);
  for (int m = -l; m <= l; ++m) v[m + l] = real_spherical_harmonic(l, m, r);
  return v;
}

double rsh_sphere_norm2(int l) {
  static const auto norms = [] {
    std::array<double, kTableLMax + 1> n{};
    for (int l = 0; l <= kTableLMax; ++l) {
      // uniform across m within a degree; computed for every m and checked
      double ref = 0.0;
      for (int m = -l; m <= l; ++m) {
        double s = 0.0;
        for (const auto& a : terms_cached(l, m))
          for (const auto& b : terms_cached(l, m))
            s += a.c * b.c *
                 monomial_sphere_integral(a.ex + b.ex, a.ey + b.ey, a.ez + b.ez);
        if (m == -l)
          ref = s;
        else if (std::abs(s - ref) > 1e-10 * ref)
          throw std::logic_error("o3: non-uniform RSH normalization");
      }
      n[static_cast<std::size_t>(l)] = ref;
    }
    return n;
  }();
  if (l < 0 || l > kTableLMax) throw std::domain_error("rsh_sphere_norm2 range");
  return norms[static_cast<std::size_t>(l)];
}

const std::vector<CgEntry> CgTable::empty_;

CgTable::CgTable(int lmax) : lmax_(lmax) {
  if (lmax > kTableLMax) throw std::domain_error("CgTable: lmax too large");
  const Quadrature quad = sphere_quadrature(24, 40);
  std::vector<Umat> U;
  for (int l = 0; l <= lmax; ++l) U.push_back(transform_matrix(l, quad));

  const auto n = static_cast<std::size_t>(lmax + 1);
  dense_.assign(n, {});
  nz_.assign(n, {});
  gaunt_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    dense_[i].assign(n, std::vector<std::vector<double>>(n));
    nz_[i].assign(n, std::vector<std::vector<CgEntry>>(n));
    gaunt_[i].assign(n, std::vector<std::vector<double>>(n));
  }

  for (int l1 = 0; l1 <= lmax; ++l1)
    for (int l2 = 0; l2 <= lmax; ++l2)
      for (int l = std::abs(l1 - l2); l <= std::min(lmax, l1 + l2); ++l) {
        auto& block = dense_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
        auto& nzb = nz_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
        auto& gb = gaunt_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
        const std::size_t sz = static_cast<std::size_t>(2 * l1 + 1) *
                               static_cast<std::size_t>(2 * l2 + 1) *
                               static_cast<std::size_t>(2 * l + 1);
        block.assign(sz, 0.0);
        gb.assign(sz, 0.0);
        const bool odd = (l1 + l2 + l) % 2;
        for (int m1 = -l1; m1 <= l1; ++m1)
          for (int m2 = -l2; m2 <= l2; ++m2)
            for (int m = -l; m <= l; ++m) {
              std::complex<double> z = 0.0;
              for (int mu1 = -l1; mu1 <= l1; ++mu1)
                for (int mu2 = -l2; mu2 <= l2; ++mu2) {
                  const int mu = mu1 + mu2;
                  if (std::abs(mu) > l) continue;
                  const auto a = U[static_cast<std::size_t>(l1)][static_cast<std::size_t>(m1 + l1)][static_cast<std::size_t>(mu1 + l1)];
                  if (a == 0.0) continue;
                  const auto b = U[static_cast<std::size_t>(l2)][static_cast<std::size_t>(m2 + l2)][static_cast<std::size_t>(mu2 + l2)];
                  if (b == 0.0) continue;
                  const auto c = std::conj(U[static_cast<std::size_t>(l)][static_cast<std::size_t>(m + l)][static_cast<std::size_t>(mu + l)]);
                  if (c == 0.0) continue;
                  z += a * b * c * cg_complex(l1, mu1, l2, mu2, l, mu);
                }
              // for odd l1+l2+l the transformed coefficient is purely
              // imaginary; a global phase of -i per (l1,l2,l) block keeps the
              // tensor real without affecting orthogonality or equivariance
              const double keep = odd ? z.imag() : z.real();
              const double drop = odd ? z.real() : z.imag();
              if (std::abs(drop) > 1e-10)
                throw std::logic_error("o3: real CG has mixed phase");
              if (std::abs(keep) < 1e-14) continue;
              block[flat(l1, m1, l2, m2, l, m)] = keep;
              nzb.push_back({static_cast<std::int16_t>(m1 + l1),
                             static_cast<std::int16_t>(m2 + l2),
                             static_cast<std::int16_t>(m + l), keep});
            }
        // real Gaunt factors by exact monomial integration over the sphere
        if (!odd) {
          for (int m1 = -l1; m1 <= l1; ++m1)
            for (int m2 = -l2; m2 <= l2; ++m2)
              for (int m = -l; m <= l; ++m) {
                double g = 0.0;
                for (const auto& a : terms_cached(l1, m1))
                  for (const auto& b : terms_cached(l2, m2))
                    for (const auto& c : terms_cached(l, m))
                      g += a.c * b.c * c.c *
                           monomial_sphere_integral(a.ex + b.ex + c.ex,
                                                    a.ey + b.ey + c.ey,
                                                    a.ez + b.ez + c.ez);
                if (std::abs(g) > 1e-14) gb[flat(l1, m1, l2, m2, l, m)] = g;
              }
        }
      }
}

double CgTable::so3(int l1, int m1, int l2, int m2, int l, int m) const {
  if (l1 < 0 || l2 < 0 || l < 0 || l1 > lmax_ || l2 > lmax_ || l > lmax_) return 0.0;
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m) > l) return 0.0;
  if (l < std::abs(l1 - l2) || l > l1 + l2) return 0.0;
  const auto& block = dense_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
  if (block.empty()) return 0.0;
  return block[flat(l1, m1, l2, m2, l, m)];
}

double CgTable::o3(int l1, int p1, int m1, int l2, int p2, int m2, int l, int p,
                   int m) const {
  const int parity = ((l1 + l2 + l) % 2) ? -1 : 1;
  if (p1 * p2 * parity != p) return 0.0;
  return so3(l1, m1, l2, m2, l, m);
}

const std::vector<CgEntry>& CgTable::nonzeros(int l1, int l2, int l) const {
  if (l1 < 0 || l2 < 0 || l < 0 || l1 > lmax_ || l2 > lmax_ || l > lmax_) return empty_;
  if (l < std::abs(l1 - l2) || l > l1 + l2) return empty_;
  return nz_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
}

double CgTable::real_gaunt(int l1, int m1, int l2, int m2, int l, int m) const {
  if (l1 < 0 || l2 < 0 || l < 0 || l1 > lmax_ || l2 > lmax_ || l > lmax_) return 0.0;
  if (std::abs(m1) > l1 || std::abs(m2) > l2 || std::abs(m) > l) return 0.0;
  if (l < std::abs(l1 - l2) || l > l1 + l2) return 0.0;
  const auto& block = gaunt_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
  if (block.empty()) return 0.0;
  return block[flat(l1, m1, l2, m2, l, m)];
}

void CgTable::scale_entry_for_testing(int l1, int l2, int l, double factor) {
  auto& nzb = nz_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
  if (nzb.empty()) throw std::invalid_argument("scale_entry_for_testing: empty coupling block");
  CgEntry& e = nzb.front();
  e.c *= factor;
  auto& block = dense_[static_cast<std::size_t>(l1)][static_cast<std::size_t>(l2)][static_cast<std::size_t>(l)];
  block[flat(l1, e.m1 - l1, l2, e.m2 - l2, l, e.m - l)] = e.c;
}

namespace {
CgTable& shared_cg_table() {
  static CgTable table(kTableLMax);
  return table;
}
}  // namespace

const CgTable& cg_table() { return shared_cg_table(); }

void scale_cg_entry_for_testing(int l1, int l2, int l, double factor) {
  shared_cg_table().scale_entry_for_testing(l1, l2, l, factor);
}

Eigen::MatrixXd wigner_d(int l, const Eigen::Matrix3d& R) {
  if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      1e-10)
    throw std::domain_error("wigner_d: matrix not orthogonal");
  if (R.determinant() < 0.0) throw std::domain_error("wigner_d: det must be +1");
  const int d = 2 * l + 1;
  if (l == 0) return Eigen::MatrixXd::Identity(1, 1);
  // deterministic generic directions (spherical Fibonacci spiral)
  const int k = 2 * d + 3;
  Eigen::MatrixXd A(k, d), B(k, d);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  for (int i = 0; i < k; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / k;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = 2.0 * kPi * i / golden;
    const Eigen::Vector3d r(rho * std::cos(phi), rho * std::sin(phi), z);
    A.row(i) = rsh_vector(l, r).transpose();
    B.row(i) = rsh_vector(l, R * r).transpose();
  }
  // rows satisfy Y(R r)^T = Y(r)^T D^T
  const Eigen::MatrixXd Dt = A.colPivHouseholderQr().solve(B);
  return Dt.transpose();
}

Eigen::Matrix3d random_rotation(double u1, double u2, double u3) {
  // Shoemake's uniform quaternion construction
  const double s1 = std::sqrt(1.0 - u1), s2 = std::sqrt(u1);
  const double t1 = 2.0 * kPi * u2, t2 = 2.0 * kPi * u3;
  const double w = std::cos(t2) * s2;
  const double x = std::sin(t1) * s1;
  const double y = std::cos(t1) * s1;
  const double z = std::sin(t2) * s2;
  return Eigen::Quaterniond(w, x, y, z).normalized().toRotationMatrix();
}

}  // namespace unite::o3
