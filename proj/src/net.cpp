#include "unite/net.hpp"

#include <map>
#include <mutex>
#include <random>

namespace unite {

ChannelSpec ChannelSpec::full() {
  ChannelSpec s;
  s.counts = {{{128, 24}, {48, 8}, {24, 4}, {12, 2}, {6, 0}}};
  return s;
}

ChannelSpec ChannelSpec::small_test() {
  ChannelSpec s;
  s.counts = {{{8, 2}, {4, 1}, {2, 1}, {1, 1}, {1, 0}}};
  return s;
}

int ChannelSpec::n_neurons() const {
  int n = 0;
  for (int l = 0; l <= o3::kLMax; ++l) n += count(l, 0) + count(l, 1);
  return n;
}

int ChannelSpec::neuron_offset(int l, int pidx) const {
  int n = 0;
  for (int ll = 0; ll <= o3::kLMax; ++ll)
    for (int pp = 0; pp < 2; ++pp) {
      if (ll == l && pp == pidx) return n;
      n += count(ll, pp);
    }
  throw std::out_of_range("neuron_offset");
}

int ChannelSpec::comp_offset(int l, int pidx) const {
  int n = 0;
  for (int ll = 0; ll <= o3::kLMax; ++ll)
    for (int pp = 0; pp < 2; ++pp) {
      if (ll == l && pp == pidx) return n;
      n += count(ll, pp) * (2 * ll + 1);
    }
  throw std::out_of_range("comp_offset");
}

int ChannelSpec::width() const {
  int n = 0;
  for (int l = 0; l <= o3::kLMax; ++l)
    n += (count(l, 0) + count(l, 1)) * (2 * l + 1);
  return n;
}

ModelConfig ModelConfig::full(int n_in) {
  ModelConfig c;
  c.channels = ChannelSpec::full();
  c.n_in = n_in;
  return c;
}

ModelConfig ModelConfig::small_test(int n_in) {
  ModelConfig c;
  c.channels = ChannelSpec::small_test();
  c.n_in = n_in;
  c.t1 = 1;
  c.t2 = 1;
  c.I = 2;
  c.J = 2;
  c.att_dim = 8;
  return c;
}

std::string pname(int t, const std::string& suffix) {
  return "step" + std::to_string(t) + "." + suffix;
}

const std::vector<Eigen::MatrixXd>& aux_q(int z) {
  static std::mutex mtx;
  static std::map<int, std::vector<Eigen::MatrixXd>> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(z);
  if (it == cache.end()) {
    if (!element_known(z)) throw std::invalid_argument("aux_q: unknown element");
    it = cache.emplace(z, aux_overlap(z, AuxBasisSpec::standard())).first;
  }
  return it->second;
}

namespace {

struct Init {
  ParamStore& store;
  std::mt19937 rng;

  // y = W x scaled by 1/sqrt(fan_in)
  void weight(const std::string& name, int rows, int cols) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> v(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (double& x : v) x = dist(rng);
    store.add({name, {rows, cols}, std::move(v), true});
  }
  void zeros(const std::string& name, int n, bool trainable = true) {
    store.add({name, {n}, std::vector<double>(static_cast<std::size_t>(n), 0.0), trainable});
  }
  void constant(const std::string& name, int n, double value, bool trainable) {
    store.add({name, {n}, std::vector<double>(static_cast<std::size_t>(n), value), trainable});
  }
};

}  // namespace

ParamStore build_params(const ModelConfig& cfg, unsigned seed) {
  ParamStore store;
  Init init{store, std::mt19937(seed)};
  const ChannelSpec& spec = cfg.channels;
  const AuxBasisSpec& aux = AuxBasisSpec::standard();
  const int nn = spec.n_neurons();

  for (int l = 0; l <= 2; ++l)
    if (spec.count(l, 0) > 0 && aux.count(l) > 0)
      init.weight("embed.l" + std::to_string(l), spec.count(l, 0), aux.count(l) * cfg.n_in);

  for (int t = 0; t < cfg.t1; ++t) {
    init.weight(pname(t, "mix"), cfg.I, cfg.n_in);
    for (int i = 0; i < cfg.I; ++i)
      for (int l = 0; l <= 2; ++l) {
        init.weight(pname(t, "match.i" + std::to_string(i) + ".l" + std::to_string(l)),
                    max_shells_per_l(l), spec.count(l, 0));
        init.weight(pname(t, "geo.i" + std::to_string(i) + ".l" + std::to_string(l)),
                    max_shells_per_l(l), 1);
      }
    init.weight(pname(t, "att.Wa"), cfg.att_dim, nn);
    init.weight(pname(t, "att.Wk"), cfg.att_dim, cfg.n_xi);
    {
      std::vector<double> g(static_cast<std::size_t>(cfg.n_xi));
      for (int k = 0; k < cfg.n_xi; ++k) g[static_cast<std::size_t>(k)] = 0.3 * std::pow(1.08, k);
      store.add({pname(t, "att.gamma"), {cfg.n_xi}, std::move(g), true});
    }
    init.weight(pname(t, "att.mlp.W0"), cfg.att_dim, cfg.att_dim);
    init.zeros(pname(t, "att.mlp.b0"), cfg.att_dim);
    init.weight(pname(t, "att.mlp.W1"), cfg.J, cfg.att_dim);
    init.zeros(pname(t, "att.mlp.b1"), cfg.J);
    for (int l = 0; l <= 2; ++l)
      init.weight(pname(t, "rev.l" + std::to_string(l)), spec.count(l, 0),
                  max_shells_per_l(l) * cfg.I * cfg.J);
  }

  std::uniform_real_distribution<double> beta_dist(0.5, 1.5);
  for (int t = 0; t < cfg.steps(); ++t) {
    for (int l = 0; l <= o3::kLMax; ++l)
      for (int pidx = 0; pidx < 2; ++pidx) {
        const int cnt = spec.count(l, pidx);
        if (cnt == 0) continue;
        const std::string tag = ".l" + std::to_string(l) + "p" + std::to_string(pidx);
        init.weight(pname(t, "pi.Win" + tag), cnt, cnt);
        init.weight(pname(t, "pi.Wout" + tag), cnt, cnt);
      }
    init.weight(pname(t, "pi.mlp1.W0"), nn, nn);
    init.zeros(pname(t, "pi.mlp1.b0"), nn);
    init.weight(pname(t, "pi.mlp1.W1"), nn, nn);
    init.zeros(pname(t, "pi.mlp1.b1"), nn);
    init.weight(pname(t, "pi.mlp2.W0"), nn, nn);
    init.zeros(pname(t, "pi.mlp2.b0"), nn);
    if (cfg.zero_init_output) {
      init.zeros(pname(t, "pi.mlp2.W1"), nn * nn);
      store.at(pname(t, "pi.mlp2.W1")).shape = {nn, nn};
    } else {
      init.weight(pname(t, "pi.mlp2.W1"), nn, nn);
    }
    init.zeros(pname(t, "pi.mlp2.b1"), nn);
    for (const char* site : {"pi.n1", "pi.n2"}) {
      std::vector<double> b(static_cast<std::size_t>(nn));
      for (double& x : b) x = beta_dist(init.rng);
      store.add({pname(t, std::string(site) + ".beta"), {nn}, std::move(b), true});
      if (t < cfg.t1) {
        init.constant(pname(t, std::string(site) + ".mean"), nn, 0.0, false);
        init.constant(pname(t, std::string(site) + ".var"), nn, 1.0, false);
      }
    }
  }
  return store;
}

}  // namespace unite
