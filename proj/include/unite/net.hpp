#pragma once

// The equivariant network core: diagonal reduction, matching layers, block
// convolution, attention-weighted message passing with geometric terms,
// EvNorm and point-wise interaction. The forward pass is templated on the
// scalar type so the identical code runs on doubles (inference, property
// harnesses) and on tape variables (training, gradient checks).

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "unite/ad.hpp"
#include "unite/ao_basis.hpp"
#include "unite/featurizer.hpp"
#include "unite/params.hpp"

namespace unite {

using ad::value_of;

inline constexpr double kEvEps = 0.1;       // EvNorm stability factor
inline constexpr double kStatEps = 1e-5;    // variance floor inside sigma
inline constexpr double kLogFloor = 1e-12;  // block-norm floor before log

// Channel counts per (degree l, parity p); pidx 0 means p=+1, 1 means p=-1.
struct ChannelSpec {
  std::array<std::array<int, 2>, o3::kLMax + 1> counts{};

  static ChannelSpec full();        // (128,48,24,12,6) / (24,8,4,2,0)
  static ChannelSpec small_test();  // (8,4,2,1,1) / (2,1,1,1,0)

  int count(int l, int pidx) const { return counts[static_cast<std::size_t>(l)][static_cast<std::size_t>(pidx)]; }
  int n_neurons() const;
  int neuron_offset(int l, int pidx) const;  // flat neuron index of channel 0
  int comp_offset(int l, int pidx) const;    // flat component base within one atom
  int width() const;                         // sum of N_lp (2l+1)
  friend bool operator==(const ChannelSpec&, const ChannelSpec&) = default;
};

struct ModelConfig {
  ChannelSpec channels;
  int n_in = 4;   // input tensor channels
  int t1 = 4;     // convolution update steps
  int t2 = 4;     // point-wise-only update steps
  int I = 8;      // convolution channels
  int J = 8;      // attention heads
  int n_xi = 16;  // Morlet basis size
  int att_dim = 32;
  bool zero_init_output = true;  // zero final MLP2 layer: identity at init

  static ModelConfig full(int n_in = 4);
  static ModelConfig small_test(int n_in = 4);
  int steps() const { return t1 + t2; }
};

// All network parameters for a config, registered in a deterministic order
// with seeded random init. Running EvNorm statistics are non-trainable.
ParamStore build_params(const ModelConfig& cfg, unsigned seed);

// Parameter array names ("step3.att.Wa", "embed.l1", ...).
std::string pname(int t, const std::string& suffix);

// On-site auxiliary overlap matrices Q(k) per element, cached.
const std::vector<Eigen::MatrixXd>& aux_q(int z);

// Per-atom equivariant representation, flat per-atom layout
// [l, p, channel, component]; component index is m + l.
template <class T>
struct Rep {
  ChannelSpec spec;
  int n_atoms = 0;
  std::vector<T> v;

  static Rep zeros(const ChannelSpec& s, int atoms) {
    Rep r;
    r.spec = s;
    r.n_atoms = atoms;
    r.v.assign(static_cast<std::size_t>(atoms) * static_cast<std::size_t>(s.width()), T(0.0));
    return r;
  }
  T& at(int a, int l, int pidx, int c, int mi) {
    return v[static_cast<std::size_t>(a * spec.width() + spec.comp_offset(l, pidx) + c * (2 * l + 1) + mi)];
  }
  const T& at(int a, int l, int pidx, int c, int mi) const {
    return v[static_cast<std::size_t>(a * spec.width() + spec.comp_offset(l, pidx) + c * (2 * l + 1) + mi)];
  }
};

// Messages flowing into each receiver atom from every active partner:
// recv[a] lists (sender b, m[i][nu]) with nu running over a's AOs.
template <class T>
struct PairMessages {
  struct Entry {
    int b;
    std::vector<std::vector<T>> m;
  };
  std::vector<std::vector<Entry>> recv;
};

struct ForwardOptions {
  bool training = false;   // batch-statistics mode uses live stats + updates
  bool parallel = false;   // OpenMP over atoms (double scalar only)
  ParamStore* stats = nullptr;  // receives running-stat updates when training
};

template <class T>
Rep<T> diagonal_reduce(const NBodyTensor& tin, const TypedParams<T>& P,
                       const ModelConfig& cfg);

template <class T>
std::vector<T> matching(const Rep<T>& h, int atom, const AOBasis& basis,
                        const TypedParams<T>& P, const ModelConfig& cfg,
                        int t, int i);

template <class T>
PairMessages<T> block_convolution(const NBodyTensor& tin, const Rep<T>& h,
                                  const TypedParams<T>& P, const ModelConfig& cfg,
                                  int t);

template <class T>
std::vector<T> attention_weights(const NBodyTensor& tin, const Rep<T>& h,
                                 int A, int B, const TypedParams<T>& P,
                                 const ModelConfig& cfg, int t);

// Aggregated per-atom message, flat [nu, i, j] with nu over the atom's AOs.
template <class T>
std::vector<std::vector<T>> message_pass(const NBodyTensor& tin, const Rep<T>& h,
                                         const PairMessages<T>& msgs,
                                         const TypedParams<T>& P,
                                         const ModelConfig& cfg, int t,
                                         bool parallel = false);

template <class T>
Rep<T> reverse_matching(const std::vector<std::vector<T>>& mt, const AOBasis& basis,
                        const TypedParams<T>& P, const ModelConfig& cfg, int t);

// Single-neuron EvNorm split given explicit statistics; returns (hbar, hhat).
template <class T>
std::pair<T, std::vector<T>> ev_split(const std::vector<T>& comp, const T& mu,
                                      const T& sigma, const T& inv_beta);

template <class T>
struct EvNormResult {
  std::vector<std::vector<T>> bar;  // per atom, n_neurons invariants
  Rep<T> hat;
};

// Per-neuron statistics vectors (length n_neurons) applied atom-wise.
template <class T>
EvNormResult<T> evnorm(const Rep<T>& h, const std::vector<T>& beta,
                       const std::vector<T>& mu, const std::vector<T>& sigma);

template <class T>
Rep<T> pointwise_interaction(const Rep<T>& h, const Rep<T>& g,
                             const TypedParams<T>& P, const ModelConfig& cfg,
                             int t, const ForwardOptions& opts = {});

template <class T>
Rep<T> forward(const NBodyTensor& tin, const TypedParams<T>& P,
               const ModelConfig& cfg, const ForwardOptions& opts = {});

// ---------------------------------------------------------------------------
// template implementation

namespace detail {

template <class T>
T swish(const T& x) {
  using std::exp;
  using ad::exp;
  return x / (T(1.0) + exp(-x));
}

template <class T>
T guarded_sqrt(const T& s) {
  using std::sqrt;
  using ad::sqrt;
  // the additive tiny keeps the derivative finite at exactly zero input
  return sqrt(s + T(1e-300));
}

// y = W1 swish(W0 x + b0) + b1, row-major weights.
template <class T>
std::vector<T> mlp2(const std::vector<T>& W0, const std::vector<T>& b0,
                    const std::vector<T>& W1, const std::vector<T>& b1,
                    int in, int hid, int out, const std::vector<T>& x) {
  std::vector<T> y0(static_cast<std::size_t>(hid));
  for (int r = 0; r < hid; ++r) {
    T s = b0[static_cast<std::size_t>(r)];
    for (int c = 0; c < in; ++c) s += W0[static_cast<std::size_t>(r * in + c)] * x[static_cast<std::size_t>(c)];
    y0[static_cast<std::size_t>(r)] = swish(s);
  }
  std::vector<T> y(static_cast<std::size_t>(out));
  for (int r = 0; r < out; ++r) {
    T s = b1[static_cast<std::size_t>(r)];
    for (int c = 0; c < hid; ++c) s += W1[static_cast<std::size_t>(r * hid + c)] * y0[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] = s;
  }
  return y;
}

template <class T, class F>
void par_for(int n, bool parallel, F&& f) {
#ifdef UNITE_HAVE_OPENMP
  if constexpr (std::is_same_v<T, double>) {
    if (parallel) {
#pragma omp parallel for schedule(static)
      for (int i = 0; i < n; ++i) f(i);
      return;
    }
  }
#endif
  (void)parallel;
  for (int i = 0; i < n; ++i) f(i);
}

inline bool pair_active(const NBodyTensor& tin, int A, int B) {
  for (int c = 0; c < tin.n_channels(); ++c)
    if (tin.block_at(c, A, B).cwiseAbs().maxCoeff() > 0.0) return true;
  return false;
}

// invariant neuron magnitudes ||h|| = sqrt(sum_m h^2 + eps^2) - eps
template <class T>
std::vector<T> neuron_norms(const Rep<T>& h, int a) {
  const ChannelSpec& s = h.spec;
  std::vector<T> out(static_cast<std::size_t>(s.n_neurons()));
  for (int l = 0; l <= o3::kLMax; ++l)
    for (int pidx = 0; pidx < 2; ++pidx)
      for (int c = 0; c < s.count(l, pidx); ++c) {
        T ss = T(kEvEps * kEvEps);
        for (int mi = 0; mi < 2 * l + 1; ++mi) {
          const T& x = h.at(a, l, pidx, c, mi);
          ss += x * x;
        }
        using std::sqrt;
        using ad::sqrt;
        out[static_cast<std::size_t>(s.neuron_offset(l, pidx) + c)] = sqrt(ss) - T(kEvEps);
      }
  return out;
}

}  // namespace detail

template <class T>
Rep<T> diagonal_reduce(const NBodyTensor& tin, const TypedParams<T>& P,
                       const ModelConfig& cfg) {
  if (tin.n_channels() != cfg.n_in)
    throw std::invalid_argument("diagonal_reduce: tensor channel count mismatch");
  const AuxBasisSpec& aux = AuxBasisSpec::standard();
  const int n = tin.geom.n_atoms();
  Rep<T> h = Rep<T>::zeros(cfg.channels, n);
  for (int a = 0; a < n; ++a) {
    const std::vector<Eigen::MatrixXd>& Q = aux_q(tin.geom.Z[static_cast<std::size_t>(a)]);
    for (int l = 0; l <= 2; ++l) {
      const int K = aux.count(l);
      const int nout = cfg.channels.count(l, 0);
      if (K == 0 || nout == 0) continue;
      // raw contractions, column index (k-1)*n_in + channel
      std::vector<std::vector<double>> raw(
          static_cast<std::size_t>(K * cfg.n_in),
          std::vector<double>(static_cast<std::size_t>(2 * l + 1), 0.0));
      int k = 0;
      for (std::size_t si = 0; si < aux.shells.size(); ++si) {
        if (aux.shells[si].l != l) continue;
        const int base = aux.func_offset(static_cast<int>(si));
        for (int c = 0; c < cfg.n_in; ++c)
          for (int mi = 0; mi < 2 * l + 1; ++mi)
            raw[static_cast<std::size_t>(k * cfg.n_in + c)][static_cast<std::size_t>(mi)] =
                (tin.block_at(c, a, a).cwiseProduct(Q[static_cast<std::size_t>(base + mi)])).sum();
        ++k;
      }
      const std::vector<T>& W = P("embed.l" + std::to_string(l));
      const int cols = K * cfg.n_in;
      for (int c = 0; c < nout; ++c)
        for (int mi = 0; mi < 2 * l + 1; ++mi) {
          T s = T(0.0);
          for (int col = 0; col < cols; ++col)
            s += W[static_cast<std::size_t>(c * cols + col)] * T(raw[static_cast<std::size_t>(col)][static_cast<std::size_t>(mi)]);
          h.at(a, l, 0, c, mi) = s;
        }
    }
  }
  return h;
}

template <class T>
std::vector<T> matching(const Rep<T>& h, int atom, const AOBasis& basis,
                        const TypedParams<T>& P, const ModelConfig& cfg,
                        int t, int i) {
  std::vector<T> rho(static_cast<std::size_t>(basis.atom_nao(atom)), T(0.0));
  const int base = basis.atom_offset(atom);
  for (int si : basis.atom_shells(atom)) {
    const auto& sh = basis.shells()[static_cast<std::size_t>(si)];
    const int nlp = cfg.channels.count(sh.l, 0);
    const std::vector<T>& W =
        P(pname(t, "match.i" + std::to_string(i) + ".l" + std::to_string(sh.l)));
    for (int mi = 0; mi < 2 * sh.l + 1; ++mi) {
      T s = T(0.0);
      for (int c = 0; c < nlp; ++c)
        s += W[static_cast<std::size_t>((sh.n - 1) * nlp + c)] * h.at(atom, sh.l, 0, c, mi);
      rho[static_cast<std::size_t>(sh.offset - base + mi)] = s;
    }
  }
  return rho;
}

template <class T>
PairMessages<T> block_convolution(const NBodyTensor& tin, const Rep<T>& h,
                                  const TypedParams<T>& P, const ModelConfig& cfg,
                                  int t) {
  const int n = tin.geom.n_atoms();
  const std::vector<T>& Wmix = P(pname(t, "mix"));
  PairMessages<T> out;
  out.recv.resize(static_cast<std::size_t>(n));
  // sender-side matching vectors, computed once per (b, i)
  std::vector<std::vector<std::vector<T>>> rho(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) {
    rho[static_cast<std::size_t>(b)].resize(static_cast<std::size_t>(cfg.I));
    for (int i = 0; i < cfg.I; ++i)
      rho[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)] =
          matching(h, b, tin.basis, P, cfg, t, i);
  }
  for (int a = 0; a < n; ++a) {
    const int na = tin.basis.atom_nao(a);
    for (int b = 0; b < n; ++b) {
      if (b == a || !detail::pair_active(tin, b, a)) continue;
      const int nb = tin.basis.atom_nao(b);
      typename PairMessages<T>::Entry e;
      e.b = b;
      e.m.assign(static_cast<std::size_t>(cfg.I),
                 std::vector<T>(static_cast<std::size_t>(na), T(0.0)));
      for (int i = 0; i < cfg.I; ++i) {
        const std::vector<T>& rb = rho[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        for (int c = 0; c < cfg.n_in; ++c) {
          const T& w = Wmix[static_cast<std::size_t>(i * cfg.n_in + c)];
          if (value_of(w) == 0.0 && std::is_same_v<T, double>) continue;
          const auto blk = tin.block_at(c, b, a);
          for (int nu = 0; nu < na; ++nu) {
            T s = T(0.0);
            for (int mu = 0; mu < nb; ++mu) {
              const double tval = blk(mu, nu);
              if (tval != 0.0) s += rb[static_cast<std::size_t>(mu)] * T(tval);
            }
            e.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(nu)] += w * s;
          }
        }
      }
      out.recv[static_cast<std::size_t>(a)].push_back(std::move(e));
    }
  }
  return out;
}

template <class T>
std::vector<T> attention_weights(const NBodyTensor& tin, const Rep<T>& h,
                                 int A, int B, const TypedParams<T>& P,
                                 const ModelConfig& cfg, int t) {
  using std::cos;
  using std::exp;
  using std::log;
  using std::sqrt;
  using ad::cos;
  using ad::exp;
  using ad::log;
  using ad::sqrt;
  const ChannelSpec& spec = cfg.channels;
  // z: per-neuron inner products of the two atoms' components
  std::vector<T> z(static_cast<std::size_t>(spec.n_neurons()), T(0.0));
  for (int l = 0; l <= o3::kLMax; ++l)
    for (int pidx = 0; pidx < 2; ++pidx)
      for (int c = 0; c < spec.count(l, pidx); ++c) {
        T s = T(0.0);
        for (int mi = 0; mi < 2 * l + 1; ++mi)
          s += h.at(A, l, pidx, c, mi) * h.at(B, l, pidx, c, mi);
        z[static_cast<std::size_t>(spec.neuron_offset(l, pidx) + c)] = s;
      }
  // Morlet features of log shell-pair block norms
  const std::vector<T>& gamma = P(pname(t, "att.gamma"));
  std::vector<T> xi(static_cast<std::size_t>(cfg.n_xi), T(0.0));
  for (int c = 0; c < cfg.n_in; ++c) {
    const auto blk = tin.block_at(c, A, B);
    const int abase = tin.basis.atom_offset(A), bbase = tin.basis.atom_offset(B);
    for (int sa : tin.basis.atom_shells(A))
      for (int sb : tin.basis.atom_shells(B)) {
        const auto& sha = tin.basis.shells()[static_cast<std::size_t>(sa)];
        const auto& shb = tin.basis.shells()[static_cast<std::size_t>(sb)];
        const double nrm =
            blk.block(sha.offset - abase, shb.offset - bbase, 2 * sha.l + 1, 2 * shb.l + 1)
                .norm();
        const double x = std::log(std::max(nrm, kLogFloor));
        for (int k = 0; k < cfg.n_xi; ++k) {
          const T& g = gamma[static_cast<std::size_t>(k)];
          xi[static_cast<std::size_t>(k)] +=
              exp(-g * T(x * x)) * cos(T(3.14159265358979323846) * g * T(x));
        }
      }
  }
  const std::vector<T>& Wa = P(pname(t, "att.Wa"));
  const std::vector<T>& Wk = P(pname(t, "att.Wk"));
  const int nn = spec.n_neurons();
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(nn));
  std::vector<T> u(static_cast<std::size_t>(cfg.att_dim));
  for (int r = 0; r < cfg.att_dim; ++r) {
    T sz = T(0.0), sk = T(0.0);
    for (int c = 0; c < nn; ++c) sz += Wa[static_cast<std::size_t>(r * nn + c)] * z[static_cast<std::size_t>(c)];
    for (int k = 0; k < cfg.n_xi; ++k) sk += Wk[static_cast<std::size_t>(r * cfg.n_xi + k)] * xi[static_cast<std::size_t>(k)];
    u[static_cast<std::size_t>(r)] = sz * sk * T(inv_sqrt_n);
  }
  return detail::mlp2(P(pname(t, "att.mlp.W0")), P(pname(t, "att.mlp.b0")),
                      P(pname(t, "att.mlp.W1")), P(pname(t, "att.mlp.b1")),
                      cfg.att_dim, cfg.att_dim, cfg.J, u);
}

template <class T>
std::vector<std::vector<T>> message_pass(const NBodyTensor& tin, const Rep<T>& h,
                                         const PairMessages<T>& msgs,
                                         const TypedParams<T>& P,
                                         const ModelConfig& cfg, int t,
                                         bool parallel) {
  const int n = tin.geom.n_atoms();
  // throwing from inside an OpenMP region is not allowed; validate up front
  for (int a = 0; a < n; ++a)
    for (const auto& e : msgs.recv[static_cast<std::size_t>(a)])
      if ((tin.geom.x[static_cast<std::size_t>(e.b)] - tin.geom.x[static_cast<std::size_t>(a)]).norm() < 1e-8)
        throw std::domain_error("message_pass: coincident atoms");
  std::vector<std::vector<T>> out(static_cast<std::size_t>(n));
  detail::par_for<T>(n, parallel, [&](int a) {
    const int na = tin.basis.atom_nao(a);
    std::vector<T> mt(static_cast<std::size_t>(na * cfg.I * cfg.J), T(0.0));
    for (const auto& e : msgs.recv[static_cast<std::size_t>(a)]) {
      const Eigen::Vector3d d = tin.geom.x[static_cast<std::size_t>(e.b)] -
                                tin.geom.x[static_cast<std::size_t>(a)];
      const std::vector<T> alpha = attention_weights(tin, h, a, e.b, P, cfg, t);
      for (int i = 0; i < cfg.I; ++i) {
        const std::vector<T>& mi = e.m[static_cast<std::size_t>(i)];
        T ss = T(0.0);
        for (const T& x : mi) ss += x * x;
        const T nrm = detail::guarded_sqrt(ss);
        // geometric term: per-shell Y_l(direction) scaled by a learned weight
        std::vector<T> geo(static_cast<std::size_t>(na), T(0.0));
        const int base = tin.basis.atom_offset(a);
        for (int si : tin.basis.atom_shells(a)) {
          const auto& sh = tin.basis.shells()[static_cast<std::size_t>(si)];
          const std::vector<T>& Wg =
              P(pname(t, "geo.i" + std::to_string(i) + ".l" + std::to_string(sh.l)));
          const Eigen::VectorXd y = o3::rsh_vector(sh.l, d);
          for (int mi2 = 0; mi2 < 2 * sh.l + 1; ++mi2)
            geo[static_cast<std::size_t>(sh.offset - base + mi2)] =
                T(y[mi2]) * Wg[static_cast<std::size_t>(sh.n - 1)] * nrm;
        }
        for (int j = 0; j < cfg.J; ++j) {
          const T& aj = alpha[static_cast<std::size_t>(j)];
          for (int nu = 0; nu < na; ++nu)
            mt[static_cast<std::size_t>((nu * cfg.I + i) * cfg.J + j)] +=
                (mi[static_cast<std::size_t>(nu)] + geo[static_cast<std::size_t>(nu)]) * aj;
        }
      }
    }
    out[static_cast<std::size_t>(a)] = std::move(mt);
  });
  return out;
}

template <class T>
Rep<T> reverse_matching(const std::vector<std::vector<T>>& mt, const AOBasis& basis,
                        const TypedParams<T>& P, const ModelConfig& cfg, int t) {
  const int n = basis.n_atoms();
  Rep<T> g = Rep<T>::zeros(cfg.channels, n);
  for (int a = 0; a < n; ++a) {
    const std::vector<T>& ma = mt[static_cast<std::size_t>(a)];
    const int base = basis.atom_offset(a);
    for (int si : basis.atom_shells(a)) {
      const auto& sh = basis.shells()[static_cast<std::size_t>(si)];
      const int nlp = cfg.channels.count(sh.l, 0);
      const int ml = max_shells_per_l(sh.l);
      const std::vector<T>& W = P(pname(t, "rev.l" + std::to_string(sh.l)));
      const int cols = ml * cfg.I * cfg.J;
      for (int c = 0; c < nlp; ++c)
        for (int mi = 0; mi < 2 * sh.l + 1; ++mi) {
          T s = g.at(a, sh.l, 0, c, mi);
          for (int i = 0; i < cfg.I; ++i)
            for (int j = 0; j < cfg.J; ++j) {
              const int col = ((sh.n - 1) * cfg.I + i) * cfg.J + j;
              const int flat = ((sh.offset - base + mi) * cfg.I + i) * cfg.J + j;
              s += W[static_cast<std::size_t>(c * cols + col)] * ma[static_cast<std::size_t>(flat)];
            }
          g.at(a, sh.l, 0, c, mi) = s;
        }
    }
  }
  return g;
}

template <class T>
std::pair<T, std::vector<T>> ev_split(const std::vector<T>& comp, const T& mu,
                                      const T& sigma, const T& inv_beta) {
  using std::sqrt;
  using ad::sqrt;
  T ss = T(kEvEps * kEvEps);
  for (const T& x : comp) ss += x * x;
  const T nrm = sqrt(ss) - T(kEvEps);
  const T bar = (nrm - mu) / sigma;
  const T denom = nrm + inv_beta + T(kEvEps);
  std::vector<T> hat(comp.size());
  for (std::size_t k = 0; k < comp.size(); ++k) hat[k] = comp[k] / denom;
  return {bar, hat};
}

template <class T>
EvNormResult<T> evnorm(const Rep<T>& h, const std::vector<T>& beta,
                       const std::vector<T>& mu, const std::vector<T>& sigma) {
  const ChannelSpec& spec = h.spec;
  EvNormResult<T> r;
  r.bar.assign(static_cast<std::size_t>(h.n_atoms),
               std::vector<T>(static_cast<std::size_t>(spec.n_neurons()), T(0.0)));
  r.hat = Rep<T>::zeros(spec, h.n_atoms);
  for (int a = 0; a < h.n_atoms; ++a)
    for (int l = 0; l <= o3::kLMax; ++l)
      for (int pidx = 0; pidx < 2; ++pidx)
        for (int c = 0; c < spec.count(l, pidx); ++c) {
          const int nidx = spec.neuron_offset(l, pidx) + c;
          std::vector<T> comp(static_cast<std::size_t>(2 * l + 1));
          for (int mi = 0; mi < 2 * l + 1; ++mi) comp[static_cast<std::size_t>(mi)] = h.at(a, l, pidx, c, mi);
          auto [bar, hat] =
              ev_split(comp, mu[static_cast<std::size_t>(nidx)], sigma[static_cast<std::size_t>(nidx)],
                       T(1.0) / beta[static_cast<std::size_t>(nidx)]);
          r.bar[static_cast<std::size_t>(a)][static_cast<std::size_t>(nidx)] = bar;
          for (int mi = 0; mi < 2 * l + 1; ++mi) r.hat.at(a, l, pidx, c, mi) = hat[static_cast<std::size_t>(mi)];
        }
  return r;
}

namespace detail {

// Statistics for one EvNorm site; batch mode uses per-neuron stats over
// atoms (running estimates at inference), layer mode uses per-(l,p)-group
// stats over atoms and channels, computed per molecule.
template <class T>
void norm_stats(const Rep<T>& h, bool batch, bool training,
                const TypedParams<T>& P, const std::string& site,
                ParamStore* stats_out, std::vector<T>& mu, std::vector<T>& sigma) {
  using std::sqrt;
  using ad::sqrt;
  const ChannelSpec& spec = h.spec;
  const int nn = spec.n_neurons();
  mu.assign(static_cast<std::size_t>(nn), T(0.0));
  sigma.assign(static_cast<std::size_t>(nn), T(1.0));
  if (batch && !training) {
    const std::vector<T>& rm = P(site + ".mean");
    const std::vector<T>& rv = P(site + ".var");
    for (int k = 0; k < nn; ++k) {
      if (value_of(rv[static_cast<std::size_t>(k)]) < 0.0)
        throw std::runtime_error("evnorm: negative running variance");
      mu[static_cast<std::size_t>(k)] = rm[static_cast<std::size_t>(k)];
      sigma[static_cast<std::size_t>(k)] = sqrt(rv[static_cast<std::size_t>(k)] + T(kStatEps));
    }
    return;
  }
  std::vector<std::vector<T>> nrm(static_cast<std::size_t>(h.n_atoms));
  for (int a = 0; a < h.n_atoms; ++a) nrm[static_cast<std::size_t>(a)] = neuron_norms(h, a);
  const T inv_atoms = T(1.0 / h.n_atoms);
  if (batch) {
    std::vector<T> var(static_cast<std::size_t>(nn), T(0.0));
    for (int k = 0; k < nn; ++k) {
      T s = T(0.0);
      for (int a = 0; a < h.n_atoms; ++a) s += nrm[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)];
      const T m = s * inv_atoms;
      T v = T(0.0);
      for (int a = 0; a < h.n_atoms; ++a) {
        const T d = nrm[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] - m;
        v += d * d;
      }
      v = v * inv_atoms;
      mu[static_cast<std::size_t>(k)] = m;
      var[static_cast<std::size_t>(k)] = v;
      sigma[static_cast<std::size_t>(k)] = sqrt(v + T(kStatEps));
    }
    if (stats_out) {
      auto& rm = stats_out->at(site + ".mean").v;
      auto& rv = stats_out->at(site + ".var").v;
      for (int k = 0; k < nn; ++k) {
        rm[static_cast<std::size_t>(k)] = 0.9 * rm[static_cast<std::size_t>(k)] + 0.1 * value_of(mu[static_cast<std::size_t>(k)]);
        rv[static_cast<std::size_t>(k)] = 0.9 * rv[static_cast<std::size_t>(k)] + 0.1 * value_of(var[static_cast<std::size_t>(k)]);
      }
    }
    return;
  }
  // layer statistics: shared over the channels of each (l, p) group
  for (int l = 0; l <= o3::kLMax; ++l)
    for (int pidx = 0; pidx < 2; ++pidx) {
      const int cnt = spec.count(l, pidx);
      if (cnt == 0) continue;
      T s = T(0.0);
      for (int a = 0; a < h.n_atoms; ++a)
        for (int c = 0; c < cnt; ++c)
          s += nrm[static_cast<std::size_t>(a)][static_cast<std::size_t>(spec.neuron_offset(l, pidx) + c)];
      const T m = s * inv_atoms * T(1.0 / cnt);
      T v = T(0.0);
      for (int a = 0; a < h.n_atoms; ++a)
        for (int c = 0; c < cnt; ++c) {
          const T d = nrm[static_cast<std::size_t>(a)][static_cast<std::size_t>(spec.neuron_offset(l, pidx) + c)] - m;
          v += d * d;
        }
      v = v * inv_atoms * T(1.0 / cnt);
      const T sg = sqrt(v + T(kStatEps));
      for (int c = 0; c < cnt; ++c) {
        mu[static_cast<std::size_t>(spec.neuron_offset(l, pidx) + c)] = m;
        sigma[static_cast<std::size_t>(spec.neuron_offset(l, pidx) + c)] = sg;
      }
    }
}

}  // namespace detail

template <class T>
Rep<T> pointwise_interaction(const Rep<T>& h, const Rep<T>& g,
                             const TypedParams<T>& P, const ModelConfig& cfg,
                             int t, const ForwardOptions& opts) {
  const ChannelSpec& spec = cfg.channels;
  const int nn = spec.n_neurons();
  const bool batch = t < cfg.t1;
  std::vector<T> mu, sigma;
  detail::norm_stats(h, batch, opts.training, P, pname(t, "pi.n1"), opts.stats, mu, sigma);
  const EvNormResult<T> e1 = evnorm(h, P(pname(t, "pi.n1.beta")), mu, sigma);

  // f = MLP1 gate applied to the linearly mixed direction content
  Rep<T> f = Rep<T>::zeros(spec, h.n_atoms);
  detail::par_for<T>(h.n_atoms, opts.parallel, [&](int a) {
    const std::vector<T> gate =
        detail::mlp2(P(pname(t, "pi.mlp1.W0")), P(pname(t, "pi.mlp1.b0")),
                     P(pname(t, "pi.mlp1.W1")), P(pname(t, "pi.mlp1.b1")), nn, nn, nn,
                     e1.bar[static_cast<std::size_t>(a)]);
    for (int l = 0; l <= o3::kLMax; ++l)
      for (int pidx = 0; pidx < 2; ++pidx) {
        const int cnt = spec.count(l, pidx);
        if (cnt == 0) continue;
        const std::vector<T>& Win = P(pname(
            t, "pi.Win.l" + std::to_string(l) + "p" + std::to_string(pidx)));
        for (int c = 0; c < cnt; ++c)
          for (int mi = 0; mi < 2 * l + 1; ++mi) {
            T s = T(0.0);
            for (int c2 = 0; c2 < cnt; ++c2)
              s += Win[static_cast<std::size_t>(c * cnt + c2)] * e1.hat.at(a, l, pidx, c2, mi);
            f.at(a, l, pidx, c, mi) = gate[static_cast<std::size_t>(spec.neuron_offset(l, pidx) + c)] * s;
          }
      }
  });

  // q = g + channel-aligned Clebsch-Gordan coupling of (f, g)
  Rep<T> q = g;
  const o3::CgTable& cg = o3::cg_table();
  detail::par_for<T>(h.n_atoms, opts.parallel, [&](int a) {
    for (int l1 = 0; l1 <= o3::kLMax; ++l1)
      for (int l2 = 0; l2 + l1 <= o3::kLMax; ++l2)
        for (int l = std::abs(l1 - l2); l <= l1 + l2; ++l)
          for (int p1i = 0; p1i < 2; ++p1i)
            for (int p2i = 0; p2i < 2; ++p2i) {
              const int p1 = p1i == 0 ? 1 : -1, p2 = p2i == 0 ? 1 : -1;
              const int p = p1 * p2 * ((l1 + l2 + l) % 2 ? -1 : 1);
              const int pidx = p == 1 ? 0 : 1;
              const int cnt = std::min({spec.count(l1, p1i), spec.count(l2, p2i),
                                        spec.count(l, pidx)});
              if (cnt == 0) continue;
              for (const auto& en : cg.nonzeros(l1, l2, l))
                for (int c = 0; c < cnt; ++c)
                  q.at(a, l, pidx, c, en.m) +=
                      f.at(a, l1, p1i, c, en.m1) * g.at(a, l2, p2i, c, en.m2) * T(en.c);
            }
  });

  detail::norm_stats(q, batch, opts.training, P, pname(t, "pi.n2"), opts.stats, mu, sigma);
  const EvNormResult<T> e2 = evnorm(q, P(pname(t, "pi.n2.beta")), mu, sigma);

  Rep<T> out = h;
  detail::par_for<T>(h.n_atoms, opts.parallel, [&](int a) {
    const std::vector<T> gate =
        detail::mlp2(P(pname(t, "pi.mlp2.W0")), P(pname(t, "pi.mlp2.b0")),
                     P(pname(t, "pi.mlp2.W1")), P(pname(t, "pi.mlp2.b1")), nn, nn, nn,
                     e2.bar[static_cast<std::size_t>(a)]);
    for (int l = 0; l <= o3::kLMax; ++l)
      for (int pidx = 0; pidx < 2; ++pidx) {
        const int cnt = spec.count(l, pidx);
        if (cnt == 0) continue;
        const std::vector<T>& Wout = P(pname(
            t, "pi.Wout.l" + std::to_string(l) + "p" + std::to_string(pidx)));
        for (int c = 0; c < cnt; ++c)
          for (int mi = 0; mi < 2 * l + 1; ++mi) {
            T s = T(0.0);
            for (int c2 = 0; c2 < cnt; ++c2)
              s += Wout[static_cast<std::size_t>(c * cnt + c2)] * e2.hat.at(a, l, pidx, c2, mi);
            out.at(a, l, pidx, c, mi) +=
                gate[static_cast<std::size_t>(spec.neuron_offset(l, pidx) + c)] * s;
          }
      }
  });
  return out;
}

template <class T>
Rep<T> forward(const NBodyTensor& tin, const TypedParams<T>& P,
               const ModelConfig& cfg, const ForwardOptions& opts) {
  Rep<T> h = diagonal_reduce(tin, P, cfg);
  for (int t = 0; t < cfg.t1; ++t) {
    const PairMessages<T> msgs = block_convolution(tin, h, P, cfg, t);
    const std::vector<std::vector<T>> mt =
        message_pass(tin, h, msgs, P, cfg, t, opts.parallel);
    const Rep<T> g = reverse_matching(mt, tin.basis, P, cfg, t);
    h = pointwise_interaction(h, g, P, cfg, t, opts);
  }
  for (int t = cfg.t1; t < cfg.steps(); ++t)
    h = pointwise_interaction(h, h, P, cfg, t, opts);
  return h;
}

}  // namespace unite
