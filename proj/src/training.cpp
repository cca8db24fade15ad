#include "unite/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace unite {

std::vector<double> collect_gradients(const ParamStore& store,
                                      const TypedParams<ad::Var>& P,
                                      const ad::Var& loss) {
  std::vector<double> grads(store.total_size(), 0.0);
  if (loss.i < 0) return grads;  // loss independent of all parameters
  const std::vector<double> adj = ad::tape().backward(loss.i);
  std::size_t flat = 0;
  for (std::size_t ai = 0; ai < store.arrays().size(); ++ai) {
    const ParamArray& arr = store.arrays()[ai];
    for (std::size_t k = 0; k < arr.v.size(); ++k, ++flat) {
      if (!arr.trainable) continue;
      const ad::Var& leaf = P.a[ai][k];
      const double g = leaf.i >= 0 ? adj[static_cast<std::size_t>(leaf.i)] : 0.0;
      if (!std::isfinite(g))
        throw std::runtime_error("non-finite gradient in parameter " + arr.name);
      grads[flat] = g;
    }
  }
  return grads;
}

double lr_at(const OptimizerConfig& cfg, int epoch) {
  if (cfg.schedule == OptimizerConfig::Schedule::step_decay) {
    const int interval = std::max(1, cfg.total_epochs / 5);  // halve every 20%
    return cfg.lr_max * std::pow(0.5, epoch / interval);
  }
  if (epoch < cfg.warmup_epochs)
    return cfg.lr_max * (epoch + 1) / cfg.warmup_epochs;
  const double span = std::max(1, cfg.total_epochs - cfg.warmup_epochs);
  const double progress = (epoch - cfg.warmup_epochs) / span;
  return cfg.lr_max * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void adam_step(ParamStore& params, const std::vector<double>& grads, AdamState& state,
               double lr, const OptimizerConfig& cfg) {
  const std::size_t n = params.total_size();
  if (grads.size() != n) throw std::invalid_argument("adam_step: gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t flat = 0;
  for (ParamArray& arr : params.arrays())
    for (double& x : arr.v) {
      if (arr.trainable) {
        state.m[flat] = cfg.beta1 * state.m[flat] + (1.0 - cfg.beta1) * grads[flat];
        state.v[flat] = cfg.beta2 * state.v[flat] + (1.0 - cfg.beta2) * grads[flat] * grads[flat];
        const double mh = state.m[flat] / bc1;
        const double vh = state.v[flat] / bc2;
        x -= lr * mh / (std::sqrt(vh) + cfg.eps);
      }
      ++flat;
    }
}

namespace {

template <class T>
T scalar_head(const Model& model, const Rep<T>& h, const Geometry& g,
              const TypedParams<T>& P) {
  switch (model.head) {
    case HeadKind::energy: return energy_pool(h, g.Z, P);
    case HeadKind::mo: return mo_pool(h, g.Z, P, model.attention_kind);
    case HeadKind::polarizability: return polarizability_pool(h, g.x, g.Z, P);
    case HeadKind::r2: return r2_pool(h, g.x, g.Z, P);
    default:
      throw std::invalid_argument("scalar prediction requested for a non-scalar head");
  }
}

}  // namespace

double predict_scalar(const Model& model, const Geometry& g, bool parallel) {
  const FeaturizeResult fr = featurize(g, model.fcfg);
  const auto P = materialize<double>(model.params);
  ForwardOptions opts;
  opts.parallel = parallel;
  const Rep<double> h = forward(fr.T, P, model.cfg, opts);
  double y = scalar_head(model, h, g, P);
  if (model.head == HeadKind::energy && model.delta_learning) y += fr.mf.e_tb;
  return y;
}

Prediction predict(const Model& model, const Geometry& g, bool parallel) {
  Prediction out;
  out.kind = model.head;
  const FeaturizeResult fr = featurize(g, model.fcfg);
  const auto P = materialize<double>(model.params);
  ForwardOptions opts;
  opts.parallel = parallel;
  const Rep<double> h = forward(fr.T, P, model.cfg, opts);
  switch (model.head) {
    case HeadKind::dipole: {
      const auto mu = dipole_pool(h, g.x, g.Z, P);
      out.vec = Eigen::Vector3d(mu[0], mu[1], mu[2]);
      break;
    }
    case HeadKind::density:
      out.density = density_pool(h, g.Z, P);
      break;
    default:
      out.scalar = scalar_head(model, h, g, P);
      if (model.head == HeadKind::energy && model.delta_learning) out.scalar += fr.mf.e_tb;
  }
  return out;
}

std::vector<Eigen::Vector3d> fd_forces(const Geometry& g,
                                       const std::function<double(const Geometry&)>& energy,
                                       double step) {
  std::vector<Eigen::Vector3d> F(static_cast<std::size_t>(g.n_atoms()),
                                 Eigen::Vector3d::Zero());
  for (int a = 0; a < g.n_atoms(); ++a)
    for (int k = 0; k < 3; ++k) {
      const auto shifted = [&](double dx) {
        Geometry gs = g;
        gs.x[static_cast<std::size_t>(a)][k] += dx;
        return energy(gs);
      };
      // five-point stencil for the first derivative
      const double d = (-shifted(2.0 * step) + 8.0 * shifted(step) - 8.0 * shifted(-step) +
                        shifted(-2.0 * step)) /
                       (12.0 * step);
      F[static_cast<std::size_t>(a)][k] = -d;
    }
  return F;
}

std::vector<Eigen::Vector3d> fd_forces(const Model& model, const Geometry& g, double step) {
  return fd_forces(g, [&](const Geometry& gs) { return predict_scalar(model, gs); }, step);
}

GradcheckResult gradcheck(const Model& model, const Geometry& g, double target,
                          double fd_step) {
  const FeaturizeResult fr = featurize(g, model.fcfg);
  // analytic gradients from the tape
  ad::reset_tape();
  const auto Pv = materialize<ad::Var>(model.params);
  const Rep<ad::Var> hv = forward(fr.T, Pv, model.cfg);
  const ad::Var pred = scalar_head(model, hv, g, Pv);
  const ad::Var loss = smooth_l1(std::vector<ad::Var>{pred}, std::vector<ad::Var>{ad::Var(target)});
  const std::vector<double> analytic = collect_gradients(model.params, Pv, loss);
  ad::reset_tape();

  ParamStore work = model.params;
  const auto eval_loss = [&] {
    const auto P = materialize<double>(work);
    const Rep<double> h = forward(fr.T, P, model.cfg);
    const double p = scalar_head(model, h, g, P);
    return value_of(smooth_l1(std::vector<double>{p}, std::vector<double>{target}));
  };
  GradcheckResult out;
  std::size_t flat = 0;
  for (std::size_t ai = 0; ai < work.arrays().size(); ++ai) {
    ParamArray& arr = work.arrays()[ai];
    for (std::size_t k = 0; k < arr.v.size(); ++k, ++flat) {
      if (!arr.trainable) continue;
      const double saved = arr.v[k];
      arr.v[k] = saved + fd_step;
      const double fp = eval_loss();
      arr.v[k] = saved - fd_step;
      const double fm = eval_loss();
      arr.v[k] = saved;
      const double fd = (fp - fm) / (2.0 * fd_step);
      const double a = analytic[flat];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3});
      if (rel > out.max_rel_err) {
        out.max_rel_err = rel;
        out.worst_param = arr.name;
      }
      ++out.checked;
    }
  }
  return out;
}

void init_element_biases(Model& model, const std::vector<TrainSample>& train) {
  std::vector<int> elements;
  for (const auto& s : train)
    for (int z : s.g.Z)
      if (std::find(elements.begin(), elements.end(), z) == elements.end())
        elements.push_back(z);
  std::sort(elements.begin(), elements.end());
  for (int z : elements)
    if (!model.params.has("head.bz.z" + std::to_string(z)))
      throw std::out_of_range("training set contains element " + std::to_string(z) +
                              " with no head bias");
  const int n = static_cast<int>(train.size()), m = static_cast<int>(elements.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, m);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int z : train[static_cast<std::size_t>(i)].g.Z) {
      const auto it = std::find(elements.begin(), elements.end(), z);
      A(i, static_cast<int>(it - elements.begin())) += 1.0;
    }
    y[i] = train[static_cast<std::size_t>(i)].label;
    if (model.delta_learning && model.head == HeadKind::energy)
      y[i] -= featurize(train[static_cast<std::size_t>(i)].g, model.fcfg).mf.e_tb;
  }
  const Eigen::VectorXd b = A.colPivHouseholderQr().solve(y);
  for (int j = 0; j < m; ++j)
    model.params.at("head.bz.z" + std::to_string(elements[static_cast<std::size_t>(j)])).v = {b[j]};
}

TrainResult train_scalar(Model& model, std::vector<TrainSample> train,
                         const std::vector<TrainSample>& val, const TrainOptions& opts,
                         std::ostream* log, ParamStore* best_params) {
  if (opts.loss.kind != LossConfig::Kind::plain &&
      opts.loss.kind != LossConfig::Kind::geometry_pair)
    throw std::invalid_argument("train_scalar: unsupported loss kind for a scalar head");
  if (train.empty()) throw std::invalid_argument("train_scalar: empty training set");

  // featurize once; tensors are constants with respect to the parameters
  struct Prepared {
    NBodyTensor T;
    double target;
    std::string id;
  };
  std::vector<Prepared> prep;
  prep.reserve(train.size());
  for (const auto& s : train) {
    const FeaturizeResult fr = featurize(s.g, model.fcfg);
    double target = s.label;
    if (model.delta_learning && model.head == HeadKind::energy) target -= fr.mf.e_tb;
    prep.push_back({fr.T, target, s.molecule_id});
  }
  if (model.params.has("head.Wo") || model.params.has("head.Wo0"))
    if (model.params.has("head.bz.z" + std::to_string(train[0].g.Z[0])))
      init_element_biases(model, train);

  std::mt19937 rng(opts.seed);
  AdamState state;
  OptimizerConfig opt = opts.opt;
  opt.total_epochs = opts.epochs;
  TrainResult result;
  result.best_val_mae = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(prep.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at(opt, epoch);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opts.batch));
      ad::reset_tape();
      const auto Pv = materialize<ad::Var>(model.params);
      ForwardOptions fopts;
      fopts.training = true;
      fopts.stats = &model.params;
      std::vector<ad::Var> preds, targets;
      std::vector<std::string> ids;
      for (std::size_t k = start; k < stop; ++k) {
        const Prepared& s = prep[order[k]];
        const Rep<ad::Var> h = forward(s.T, Pv, model.cfg, fopts);
        preds.push_back(scalar_head(model, h, s.T.geom, Pv));
        targets.push_back(ad::Var(s.target));
        ids.push_back(s.id);
      }
      ad::Var loss;
      if (opts.loss.kind == LossConfig::Kind::geometry_pair) {
        // partner drawn uniformly from the same molecule's batch members
        std::vector<int> partner(preds.size(), 0);
        std::map<std::string, std::vector<int>> groups;
        for (std::size_t k = 0; k < ids.size(); ++k) groups[ids[k]].push_back(static_cast<int>(k));
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const auto& grp = groups[ids[k]];
          partner[k] = grp[std::uniform_int_distribution<std::size_t>(0, grp.size() - 1)(rng)];
        }
        loss = geometry_pair_loss(preds, targets, partner, opts.loss.c_G);
      } else {
        loss = smooth_l1(preds, targets);
      }
      const std::vector<double> grads = collect_gradients(model.params, Pv, loss);
      adam_step(model.params, grads, state, lr, opt);
      ad::reset_tape();
      result.step_losses.push_back(value_of(loss));
      epoch_loss += value_of(loss);
      ++batches;
    }
    epoch_loss /= batches;
    if (epoch == 0 && !result.step_losses.empty())
      result.loss_after_first_step = result.step_losses.front();
    result.final_train_loss = epoch_loss;

    double val_mae = 0.0;
    if (!val.empty()) {
      for (const auto& s : val) val_mae += std::abs(predict_scalar(model, s.g) - s.label);
      val_mae /= static_cast<double>(val.size());
      if (val_mae < result.best_val_mae) {
        result.best_val_mae = val_mae;
        if (best_params) *best_params = model.params;
      }
    }
    if (log)
      (*log) << "epoch " << epoch << " lr " << lr << " train_loss " << epoch_loss
             << " val_mae " << val_mae << "\n";
  }

  if (best_params && val.empty()) *best_params = model.params;
  double mae = 0.0;
  for (const auto& s : train) mae += std::abs(predict_scalar(model, s.g) - s.label);
  result.final_train_mae = mae / static_cast<double>(train.size());
  return result;
}

}  // namespace unite
