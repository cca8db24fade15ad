#pragma once

// Reverse-mode automatic differentiation on a flat tape of scalar nodes.
// The network forward pass is templated on the scalar type, so the same
// code runs on plain doubles (inference, property harnesses) and on Var
// (training, gradient checks).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace unite::ad {

class Tape {
public:
  // node i depends on parents pa[i], pb[i] with local partials wa[i], wb[i];
  // parent index -1 means "no parent".
  std::vector<double> val;
  std::vector<double> wa, wb;
  std::vector<std::int32_t> pa, pb;

  void clear() {
    val.clear();
    wa.clear();
    wb.clear();
    pa.clear();
    pb.clear();
  }

  std::size_t size() const { return val.size(); }

  std::int32_t push(double v, std::int32_t a, double da, std::int32_t b, double db) {
    const auto i = static_cast<std::int32_t>(val.size());
    val.push_back(v);
    pa.push_back(a);
    pb.push_back(b);
    wa.push_back(da);
    wb.push_back(db);
    return i;
  }

  std::int32_t leaf(double v) { return push(v, -1, 0.0, -1, 0.0); }

  // Reverse sweep seeding d(output)/d(output) = 1.
  std::vector<double> backward(std::int32_t output) const {
    std::vector<double> adj(val.size(), 0.0);
    if (output < 0 || output >= static_cast<std::int32_t>(val.size()))
      throw std::invalid_argument("Tape::backward: bad output index");
    adj[static_cast<std::size_t>(output)] = 1.0;
    for (std::int32_t i = static_cast<std::int32_t>(val.size()) - 1; i >= 0; --i) {
      const double a = adj[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      if (pa[static_cast<std::size_t>(i)] >= 0) adj[static_cast<std::size_t>(pa[static_cast<std::size_t>(i)])] += a * wa[static_cast<std::size_t>(i)];
      if (pb[static_cast<std::size_t>(i)] >= 0) adj[static_cast<std::size_t>(pb[static_cast<std::size_t>(i)])] += a * wb[static_cast<std::size_t>(i)];
    }
    return adj;
  }
};

Tape& tape();        // thread-local active tape
void reset_tape();   // drop all nodes

// Scalar recorded on the thread-local tape. Constants carry index -1 and
// never allocate nodes; only values reached from a leaf are tracked.
struct Var {
  double v = 0.0;
  std::int32_t i = -1;

  Var() = default;
  Var(double value) : v(value), i(-1) {}
  Var(double value, std::int32_t index) : v(value), i(index) {}

  static Var leaf(double value) { return Var(value, tape().leaf(value)); }
  double value() const { return v; }
};

inline double value_of(double x) { return x; }
inline double value_of(const Var& x) { return x.v; }

namespace detail {
inline Var unary(double v, const Var& x, double dx) {
  if (x.i < 0) return Var(v);
  return Var(v, tape().push(v, x.i, dx, -1, 0.0));
}
inline Var binary(double v, const Var& x, double dx, const Var& y, double dy) {
  if (x.i < 0 && y.i < 0) return Var(v);
  return Var(v, tape().push(v, x.i, x.i < 0 ? 0.0 : dx, y.i, y.i < 0 ? 0.0 : dy));
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a.v + b.v, a, 1.0, b, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a.v - b.v, a, 1.0, b, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a.v * b.v, a, b.v, b, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.v / b.v;
  return detail::binary(q, a, 1.0 / b.v, b, -q / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(-a.v, a, -1.0); }

inline Var& operator+=(Var& a, const Var& b) { a = a + b; return a; }
inline Var& operator-=(Var& a, const Var& b) { a = a - b; return a; }
inline Var& operator*=(Var& a, const Var& b) { a = a * b; return a; }
inline Var& operator/=(Var& a, const Var& b) { a = a / b; return a; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }

inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.v);
  return detail::unary(s, x, 0.5 / s);
}
inline Var exp(const Var& x) {
  const double e = std::exp(x.v);
  return detail::unary(e, x, e);
}
inline Var log(const Var& x) { return detail::unary(std::log(x.v), x, 1.0 / x.v); }
inline Var sin(const Var& x) { return detail::unary(std::sin(x.v), x, std::cos(x.v)); }
inline Var cos(const Var& x) { return detail::unary(std::cos(x.v), x, -std::sin(x.v)); }
inline Var abs(const Var& x) { return detail::unary(std::abs(x.v), x, x.v >= 0.0 ? 1.0 : -1.0); }

}  // namespace unite::ad
