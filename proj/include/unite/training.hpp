#pragma once

// Losses, the Adam optimizer with warmup-cosine / step-decay schedules,
// tape-based parameter gradients with finite-difference verification,
// finite-difference nuclear forces, and the desk-scale training loop.

#include <functional>
#include <iosfwd>
#include <optional>

#include "unite/heads.hpp"

namespace unite {

struct LossConfig {
  enum class Kind { plain, energy_force, geometry_pair, density };
  Kind kind = Kind::plain;
  double c_E = 1.0;
  double c_F = 1000.0;
  double c_G = 10.0;
  bool delta_learning = false;
};

struct OptimizerConfig {
  enum class Schedule { warmup_cosine, step_decay };
  double lr_max = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-4;
  Schedule schedule = Schedule::warmup_cosine;
  int warmup_epochs = 50;
  int total_epochs = 500;
};

// Smooth-L1 with transition at 1: 0.5 d^2 inside, |d| - 0.5 outside; mean
// over elements.
template <class T>
T smooth_l1(const std::vector<T>& pred, const std::vector<T>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("smooth_l1: size mismatch or empty");
  using std::abs;
  using ad::abs;
  T s = T(0.0);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const T d = pred[k] - target[k];
    const T a = abs(d);
    if (value_of(a) < 1.0)
      s += T(0.5) * d * d;
    else
      s += a - T(0.5);
  }
  return s / T(static_cast<double>(pred.size()));
}

// (d - dhat)^T S (d - dhat) over the flat density-coefficient layout.
template <class T>
T density_loss(const std::vector<T>& d, const std::vector<T>& dhat,
               const Eigen::MatrixXd& S) {
  const int n = static_cast<int>(d.size());
  if (dhat.size() != d.size() || S.rows() != n || S.cols() != n)
    throw std::invalid_argument("density_loss: dimension mismatch");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("density_loss: quadratic form not symmetric");
  std::vector<T> r(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) r[static_cast<std::size_t>(k)] = d[static_cast<std::size_t>(k)] - dhat[static_cast<std::size_t>(k)];
  T q = T(0.0);
  for (int i = 0; i < n; ++i) {
    T row = T(0.0);
    for (int j = 0; j < n; ++j)
      if (S(i, j) != 0.0) row += T(S(i, j)) * r[static_cast<std::size_t>(j)];
    q += r[static_cast<std::size_t>(i)] * row;
  }
  if (value_of(q) < -1e-12)
    throw std::invalid_argument("density_loss: quadratic form not positive definite");
  return q;
}

// L(E, E_theta) + c_G L(Delta E, Delta E_theta) over paired geometries; the
// pair arrays hold the partner of each sample (self-pairs allowed).
template <class T>
T geometry_pair_loss(const std::vector<T>& pred, const std::vector<T>& target,
                     const std::vector<int>& partner, double c_G) {
  if (partner.size() != pred.size())
    throw std::invalid_argument("geometry_pair_loss: partner size mismatch");
  std::vector<T> dp(pred.size()), dt(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const auto p = static_cast<std::size_t>(partner[k]);
    dp[k] = pred[k] - pred[p];
    dt[k] = target[k] - target[p];
  }
  return smooth_l1(pred, target) + T(c_G) * smooth_l1(dp, dt);
}

// Flat gradient over every parameter value in registration order (zeros for
// non-trainable entries). Throws on non-finite gradients, naming the array.
std::vector<double> collect_gradients(const ParamStore& store,
                                      const TypedParams<ad::Var>& P,
                                      const ad::Var& loss);

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
};

// Learning rate for an epoch; `epoch == total_epochs` hits the exact cosine
// endpoint (zero).
double lr_at(const OptimizerConfig& cfg, int epoch);

// One Adam update over the trainable entries of the store.
void adam_step(ParamStore& params, const std::vector<double>& grads, AdamState& state,
               double lr, const OptimizerConfig& cfg);

// Trained model bundle: everything needed to reproduce predictions.
struct Model {
  ModelConfig cfg;
  HeadKind head = HeadKind::energy;
  FeaturizerConfig fcfg;
  bool delta_learning = false;
  MoAttentionKind attention_kind = MoAttentionKind::exponential;
  std::vector<int> elements;  // element coverage of the head tables
  ParamStore params;
};

// Scalar prediction for the configured head; adds E_TB for energy heads in
// delta-learning mode.
double predict_scalar(const Model& model, const Geometry& g, bool parallel = false);

Prediction predict(const Model& model, const Geometry& g, bool parallel = false);

// F = -dE/dx by the 5-point stencil, 0.01 Bohr spacing.
std::vector<Eigen::Vector3d> fd_forces(const Geometry& g,
                                       const std::function<double(const Geometry&)>& energy,
                                       double step = 0.01);

std::vector<Eigen::Vector3d> fd_forces(const Model& model, const Geometry& g,
                                       double step = 0.01);

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int checked = 0;
};

// Compares tape gradients of smooth_l1(prediction, target) against central
// finite differences for every trainable parameter of the model.
GradcheckResult gradcheck(const Model& model, const Geometry& g, double target,
                          double fd_step = 1e-5);

struct TrainSample {
  Geometry g;
  double label = 0.0;
  std::string molecule_id;
};

struct TrainOptions {
  int epochs = 500;
  int batch = 8;
  unsigned seed = 0;
  LossConfig loss;
  OptimizerConfig opt;
};

struct TrainResult {
  double loss_after_first_step = 0.0;
  double final_train_loss = 0.0;
  double final_train_mae = 0.0;
  double best_val_mae = 0.0;
  std::vector<double> step_losses;  // loss at every optimizer step
};

// Least-squares initialization of the per-element biases from label counts.
void init_element_biases(Model& model, const std::vector<TrainSample>& train);

// Scalar-head training loop (energy or intensive targets). Writes a plain
// text log (epoch, lr, train loss, val MAE) when `log` is non-null; copies
// the parameters of the best validation epoch into `best_params` when given.
TrainResult train_scalar(Model& model, std::vector<TrainSample> train,
                         const std::vector<TrainSample>& val, const TrainOptions& opts,
                         std::ostream* log = nullptr, ParamStore* best_params = nullptr);

}  // namespace unite
