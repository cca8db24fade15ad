#include "unite/integrals.hpp"

#include <cmath>
#include <numbers>

namespace unite {

namespace {

constexpr double kPi = std::numbers::pi;

double dfact(int n) {  // (-1)!! = 1
  double r = 1.0;
  for (int i = n; i > 1; i -= 2) r *= i;
  return r;
}

double binom(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// integral of (x - Ax)^i (x - Bx)^j exp(-g (x - Px)^2) dx over the line,
// with P the Gaussian product center.
double overlap_1d(int i, int j, double pa, double pb, double g) {
  double s = 0.0;
  for (int k = 0; k <= i; ++k)
    for (int kp = 0; kp <= j; ++kp) {
      const int n = k + kp;
      if (n % 2) continue;
      s += binom(i, k) * binom(j, kp) * std::pow(pa, i - k) *
           std::pow(pb, j - kp) * dfact(n - 1) / std::pow(2.0 * g, n / 2);
    }
  return s * std::sqrt(kPi / g);
}

}  // namespace

double gaussian_norm(int l, double alpha) {
  // radial integral of r^(2l+2) exp(-2 a r^2)
  const double radial =
      std::tgamma(l + 1.5) / (2.0 * std::pow(2.0 * alpha, l + 1.5));
  return 1.0 / std::sqrt(o3::rsh_sphere_norm2(l) * radial);
}

double overlap_prim(int l1, int m1, double alpha, const Eigen::Vector3d& A,
                    int l2, int m2, double beta, const Eigen::Vector3d& B) {
  const double g = alpha + beta;
  // everything in terms of B - A so the result is translation exact
  const Eigen::Vector3d ab = B - A;
  const double pre = std::exp(-alpha * beta / g * ab.squaredNorm());
  const Eigen::Vector3d pa = (beta / g) * ab, pb = (-alpha / g) * ab;
  double s = 0.0;
  for (const auto& ta : o3::solid_harmonic_terms(l1, m1))
    for (const auto& tb : o3::solid_harmonic_terms(l2, m2))
      s += ta.c * tb.c * overlap_1d(ta.ex, tb.ex, pa.x(), pb.x(), g) *
           overlap_1d(ta.ey, tb.ey, pa.y(), pb.y(), g) *
           overlap_1d(ta.ez, tb.ez, pa.z(), pb.z(), g);
  return gaussian_norm(l1, alpha) * gaussian_norm(l2, beta) * pre * s;
}

double onsite_triple_raw(int l1, int m1, int l2, int m2, int l, int m,
                         double a) {
  const double ang = o3::cg_table().real_gaunt(l1, m1, l2, m2, l, m);
  if (ang == 0.0) return 0.0;
  const int L = l1 + l2 + l;
  const double radial = std::tgamma((L + 3) / 2.0) / (2.0 * std::pow(a, (L + 3) / 2.0));
  return ang * radial;
}

double gaussian_integral(int l, double alpha) {
  if (l > 0) return 0.0;
  return gaussian_norm(0, alpha) * std::pow(kPi / alpha, 1.5);
}

}  // namespace unite
