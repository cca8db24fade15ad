#include "unite/check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include "unite/dataset.hpp"

namespace unite {

namespace {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;

Matrix3d random_R(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return o3::random_rotation(u(rng), u(rng), u(rng));
}

Rep<double> rotate_rep(const Rep<double>& h, const Matrix3d& R) {
  Rep<double> out = h;
  for (int l = 1; l <= o3::kLMax; ++l) {
    const MatrixXd D = o3::wigner_d(l, R);
    for (int a = 0; a < h.n_atoms; ++a)
      for (int pidx = 0; pidx < 2; ++pidx)
        for (int c = 0; c < h.spec.count(l, pidx); ++c) {
          Eigen::VectorXd vm(2 * l + 1);
          for (int mi = 0; mi <= 2 * l; ++mi) vm[mi] = h.at(a, l, pidx, c, mi);
          const Eigen::VectorXd wm = D * vm;
          for (int mi = 0; mi <= 2 * l; ++mi) out.at(a, l, pidx, c, mi) = wm[mi];
        }
  }
  return out;
}

Rep<double> parity_rep(const Rep<double>& h) {
  Rep<double> out = h;
  for (int a = 0; a < h.n_atoms; ++a)
    for (int l = 0; l <= o3::kLMax; ++l)
      for (int pidx = 0; pidx < 2; ++pidx) {
        const double s = ((l % 2) ? -1.0 : 1.0) * (pidx == 0 ? 1.0 : -1.0);
        for (int c = 0; c < h.spec.count(l, pidx); ++c)
          for (int mi = 0; mi <= 2 * l; ++mi) out.at(a, l, pidx, c, mi) = s * h.at(a, l, pidx, c, mi);
      }
  return out;
}

double max_diff(const Rep<double>& a, const Rep<double>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.v.size(); ++k) worst = std::max(worst, std::abs(a.v[k] - b.v[k]));
  return worst;
}

Model check_model(unsigned seed) {
  Model m;
  m.cfg = ModelConfig::small_test();
  m.cfg.zero_init_output = false;
  m.params = build_params(m.cfg, seed);
  m.elements = {1, 6, 7, 8};
  add_head_params(m.params, HeadKind::energy, m.cfg, m.elements, seed + 1);
  return m;
}

void push(std::vector<CheckCase>& out, const std::string& suite, const std::string& name,
          double dev, double tol) {
  out.push_back({suite, name, dev, tol, dev < tol});
}

std::vector<CheckCase> suite_cg(const CheckOptions& opts) {
  std::vector<CheckCase> out;
  std::mt19937 rng(opts.seed + 11);
  const auto& cg = o3::cg_table();

  double dev = 0.0;
  for (int l1 = 0; l1 <= 4; ++l1)
    for (int l2 = 0; l2 <= 4; ++l2)
      for (int l = std::abs(l1 - l2); l <= std::min(4, l1 + l2); ++l)
        for (int lp = std::abs(l1 - l2); lp <= std::min(4, l1 + l2); ++lp)
          for (int m = -l; m <= l; ++m)
            for (int mp = -lp; mp <= lp; ++mp) {
              double s = 0.0;
              for (int m1 = -l1; m1 <= l1; ++m1)
                for (int m2 = -l2; m2 <= l2; ++m2)
                  s += cg.so3(l1, m1, l2, m2, l, m) * cg.so3(l1, m1, l2, m2, lp, mp);
              const double expect = (l == lp && m == mp) ? 1.0 : 0.0;
              dev = std::max(dev, std::abs(s - expect));
            }
  push(out, "cg", "orthogonality", dev, 1e-12);

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  dev = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix3d R = random_R(rng);
    Vector3d r(u(rng), u(rng), u(rng));
    if (r.norm() < 0.1) r = Vector3d(1, 0, 0);
    const int l = trial % 5;
    dev = std::max(dev, (o3::rsh_vector(l, R * r) - o3::wigner_d(l, R) * o3::rsh_vector(l, r))
                            .cwiseAbs()
                            .maxCoeff());
  }
  push(out, "cg", "rsh_rotation_closure", dev, 1e-10);

  dev = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix3d r1 = random_R(rng), r2 = random_R(rng);
    for (int l = 0; l <= 4; ++l)
      dev = std::max(dev, (o3::wigner_d(l, r1 * r2) - o3::wigner_d(l, r1) * o3::wigner_d(l, r2))
                              .cwiseAbs()
                              .maxCoeff());
  }
  push(out, "cg", "wigner_homomorphism", dev, 1e-10);
  return out;
}

std::vector<CheckCase> suite_equivariance(const CheckOptions& opts) {
  std::vector<CheckCase> out;
  std::mt19937 rng(opts.seed + 23);
  const Model model = check_model(opts.seed + 31);
  const auto P = materialize<double>(model.params);
  double rot = 0.0, par = 0.0, perm = 0.0;
  const auto mols = make_toy_dataset(3, opts.seed + 5);
  for (const auto& rec : mols) {
    const FeaturizeResult fr = featurize(rec.g, model.fcfg);
    const Rep<double> h = forward<double>(fr.T, P, model.cfg);

    const Matrix3d R = random_R(rng);
    const Rep<double> hr = forward<double>(rotate_tensor(fr.T, R), P, model.cfg);
    rot = std::max(rot, max_diff(hr, rotate_rep(h, R)));

    const Rep<double> hp = forward<double>(invert_tensor(fr.T), P, model.cfg);
    par = std::max(par, max_diff(hp, parity_rep(h)));

    const int n = rec.g.n_atoms();
    std::vector<int> sigma(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) sigma[static_cast<std::size_t>(a)] = a;
    std::shuffle(sigma.begin(), sigma.end(), rng);
    const Rep<double> hs = forward<double>(permute_atoms(fr.T, sigma), P, model.cfg);
    double d = 0.0;
    for (int a = 0; a < n; ++a)
      for (int w = 0; w < h.spec.width(); ++w)
        d = std::max(d, std::abs(hs.v[static_cast<std::size_t>(sigma[static_cast<std::size_t>(a)] * h.spec.width() + w)] -
                                 h.v[static_cast<std::size_t>(a * h.spec.width() + w)]));
    perm = std::max(perm, d);
  }
  push(out, "equivariance", "rotation", rot, 1e-9);
  push(out, "equivariance", "parity", par, 1e-10);
  push(out, "equivariance", "permutation", perm, 1e-10);
  return out;
}

std::vector<CheckCase> suite_gradcheck(const CheckOptions& opts) {
  std::vector<CheckCase> out;
  const Model model = check_model(opts.seed + 41);
  const auto mols = make_toy_dataset(1, opts.seed + 7);
  const GradcheckResult r = gradcheck(model, mols[0].g, mols[0].scalars.at("energy_hartree"));
  push(out, "gradcheck", "smooth_l1_energy_vs_fd", r.max_rel_err, 1e-5);
  return out;
}

std::vector<CheckCase> suite_extensivity(const CheckOptions& opts) {
  std::vector<CheckCase> out;
  Model model = check_model(opts.seed + 53);
  const auto mols = make_toy_dataset(1, opts.seed + 9);
  const Geometry& g = mols[0].g;
  Geometry dim = g;
  for (int a = 0; a < g.n_atoms(); ++a) {
    dim.Z.push_back(g.Z[static_cast<std::size_t>(a)]);
    dim.x.push_back(g.x[static_cast<std::size_t>(a)] + Vector3d(40.0, 0, 0));
  }
  const double e1 = predict_scalar(model, g);
  const double e2 = predict_scalar(model, dim);
  push(out, "extensivity", "far_dimer_energy_doubles", std::abs(e2 - 2.0 * e1), 1e-8);

  Model mo = check_model(opts.seed + 61);
  mo.head = HeadKind::mo;
  mo.params = build_params(mo.cfg, opts.seed + 61);
  add_head_params(mo.params, HeadKind::mo, mo.cfg, mo.elements, opts.seed + 62);
  const double m1 = predict_scalar(mo, g);
  const double m2 = predict_scalar(mo, dim);
  push(out, "extensivity", "far_dimer_mo_intensive", std::abs(m2 - m1), 1e-8);
  return out;
}

std::vector<CheckCase> suite_scaling(const CheckOptions& opts) {
  std::vector<CheckCase> out;
  const ModelConfig cfg = ModelConfig::full();
  const ParamStore store = build_params(cfg, opts.seed + 71);
  const auto P = materialize<double>(store);
  std::vector<double> log_n, log_t;
  for (int n : {8, 16, 32, 64}) {
    Geometry g;
    for (int a = 0; a < n; ++a) {
      g.Z.push_back(1);
      g.x.emplace_back(2.0 * a, 0.0, 0.0);
    }
    const FeaturizeResult fr = featurize(g);
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const Rep<double> h = forward<double>(fr.T, P, cfg);
      const auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count() +
                                1e-9 * std::abs(h.v[0]));  // keep the result live
    }
    push(out, "scaling", "wall_s_n" + std::to_string(n), best, 1e9);
    log_n.push_back(std::log(static_cast<double>(n)));
    log_t.push_back(std::log(best));
  }
  // least-squares slope of log t vs log n
  const auto k = static_cast<double>(log_n.size());
  double sn = 0, st = 0, snn = 0, snt = 0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    sn += log_n[i];
    st += log_t[i];
    snn += log_n[i] * log_n[i];
    snt += log_n[i] * log_t[i];
  }
  const double slope = (k * snt - sn * st) / (k * snn - sn * sn);
  push(out, "scaling", "forward_cost_exponent", slope, 1.7);
  return out;
}

}  // namespace

const std::vector<std::string>& check_suite_names() {
  static const std::vector<std::string> names = {"cg", "equivariance", "gradcheck",
                                                 "extensivity", "scaling"};
  return names;
}

std::vector<CheckCase> run_check_suite(const std::string& suite, const CheckOptions& opts) {
  if (opts.inject_cg_bug) o3::scale_cg_entry_for_testing(1, 1, 1, 1.5);
  if (suite == "all") {
    std::vector<CheckCase> out;
    for (const auto& name : check_suite_names()) {
      const auto part = run_check_suite(name, CheckOptions{opts.seed, false});
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  if (suite == "cg") return suite_cg(opts);
  if (suite == "equivariance") return suite_equivariance(opts);
  if (suite == "gradcheck") return suite_gradcheck(opts);
  if (suite == "extensivity") return suite_extensivity(opts);
  if (suite == "scaling") return suite_scaling(opts);
  throw std::invalid_argument("unknown check suite: " + suite);
}

void write_check_report(std::ostream& out, const std::vector<CheckCase>& cases) {
  for (const auto& c : cases)
    out << "suite=" << c.suite << " case=" << c.name << " max_dev=" << c.max_dev
        << " tol=" << c.tol << " pass=" << (c.pass ? 1 : 0) << "\n";
}

bool all_pass(const std::vector<CheckCase>& cases) {
  for (const auto& c : cases)
    if (!c.pass) return false;
  return !cases.empty();
}

}  // namespace unite
