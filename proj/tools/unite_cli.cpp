// Command-line front end: featurization, training, prediction, property
// check suites and evaluation over JSON-lines datasets.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef UNITE_HAVE_OPENMP
#include <omp.h>
#endif

#include "unite/check.hpp"
#include "unite/checkpoint.hpp"
#include "unite/dataset.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace unite;

namespace {

void apply_threads(int threads) {
  if (threads < 1) throw std::invalid_argument("--threads must be >= 1");
#ifdef UNITE_HAVE_OPENMP
  omp_set_num_threads(threads);
#endif
}

ModelConfig model_config_from_json(const json& j, int n_in) {
  const std::string preset = j.value("preset", "full");
  ModelConfig cfg;
  if (preset == "full")
    cfg = ModelConfig::full(n_in);
  else if (preset == "small_test")
    cfg = ModelConfig::small_test(n_in);
  else
    throw std::invalid_argument("unknown model preset: " + preset);
  cfg.t1 = j.value("t1", cfg.t1);
  cfg.t2 = j.value("t2", cfg.t2);
  cfg.I = j.value("I", cfg.I);
  cfg.J = j.value("J", cfg.J);
  cfg.n_xi = j.value("n_xi", cfg.n_xi);
  cfg.att_dim = j.value("att_dim", cfg.att_dim);
  cfg.zero_init_output = j.value("zero_init_output", cfg.zero_init_output);
  return cfg;
}

std::string default_label(HeadKind head) {
  switch (head) {
    case HeadKind::energy:
      return "energy_hartree";
    case HeadKind::dipole:
      return "dipole_au";
    case HeadKind::density:
      return "density_coeffs";
    default:
      return "target";
  }
}

std::vector<int> infer_elements(const std::vector<DatasetRecord>& records) {
  std::vector<int> elements;
  for (const auto& r : records)
    for (int z : r.g.Z)
      if (std::find(elements.begin(), elements.end(), z) == elements.end())
        elements.push_back(z);
  std::sort(elements.begin(), elements.end());
  return elements;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;
  return j;
}

void check_coverage(const Model& model, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records)
    for (int z : r.g.Z)
      if (std::find(model.elements.begin(), model.elements.end(), z) == model.elements.end())
        throw std::runtime_error("record line " + std::to_string(r.line) + ": element " +
                                 std::to_string(z) + " not covered by the checkpoint");
}

int cmd_featurize(const std::string& dataset_path, int make_toy, unsigned seed,
                  const std::string& out_path, bool fmo, int threads) {
  apply_threads(threads);
  if (make_toy > 0) {
    if (out_path.empty()) throw std::invalid_argument("--make-toy requires --out");
    save_dataset(out_path, make_toy_dataset(make_toy, seed));
    std::cout << "wrote " << make_toy << " toy records to " << out_path << "\n";
    return 0;
  }
  if (dataset_path.empty()) throw std::invalid_argument("featurize needs --dataset or --make-toy");
  FeaturizerConfig fcfg;
  fcfg.fmo_features = fmo;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  for (const auto& r : load_dataset(dataset_path)) {
    const FeaturizeResult fr = featurize(r.g, fcfg);
    json j = {{"line", r.line},
              {"molecule_id", r.molecule_id},
              {"n_atoms", r.g.n_atoms()},
              {"n_ao", fr.T.channels.at(0).rows()},
              {"channels", fr.T.channel_names},
              {"e_tb_hartree", fr.mf.e_tb}};
    out << j.dump() << "\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& dataset_path,
              const std::string& out_dir, unsigned seed, bool delta, bool fmo, int threads) {
  apply_threads(threads);
  const json cfg = load_config(config_path);
  const json jhead = cfg.value("head", json::object());
  const json jmodel = cfg.value("model", json::object());
  const json jtrain = cfg.value("training", json::object());
  const json jfeat = cfg.value("featurizer", json::object());

  Model model;
  model.head = head_kind_from_string(jhead.value("kind", "energy"));
  model.fcfg.fmo_features = fmo || jfeat.value("fmo_features", false);
  model.cfg = model_config_from_json(jmodel, model.fcfg.fmo_features ? 12 : 4);
  model.delta_learning = delta || jtrain.value("delta_learning", false);
  if (jhead.value("mo_attention", "exponential") == std::string("linear"))
    model.attention_kind = MoAttentionKind::linear;

  const std::string label = jhead.value("label", default_label(model.head));
  const auto records = load_dataset(dataset_path);
  if (records.empty()) throw std::runtime_error("empty dataset: " + dataset_path);
  for (const auto& r : records)
    if (!r.has_scalar(label))
      throw std::runtime_error("record line " + std::to_string(r.line) + ": missing label '" +
                               label + "'");

  model.elements = jhead.contains("elements") ? jhead["elements"].get<std::vector<int>>()
                                              : infer_elements(records);
  model.params = build_params(model.cfg, seed);
  add_head_params(model.params, model.head, model.cfg, model.elements, seed + 1);

  TrainOptions opts;
  opts.epochs = jtrain.value("epochs", 500);
  opts.batch = jtrain.value("batch", 8);
  opts.seed = seed;
  opts.opt.lr_max = jtrain.value("lr_max", 5e-4);
  opts.opt.warmup_epochs = jtrain.value("warmup_epochs", 50);
  const std::string sched = jtrain.value("schedule", "warmup_cosine");
  if (sched == "step_decay")
    opts.opt.schedule = OptimizerConfig::Schedule::step_decay;
  else if (sched != "warmup_cosine")
    throw std::invalid_argument("unknown schedule: " + sched);
  const std::string loss = jtrain.value("loss", "plain");
  if (loss == "geometry_pair")
    opts.loss.kind = LossConfig::Kind::geometry_pair;
  else if (loss != "plain")
    throw std::invalid_argument("train supports 'plain' or 'geometry_pair' losses, got " + loss);
  opts.loss.c_G = jtrain.value("c_G", 10.0);
  opts.loss.delta_learning = model.delta_learning;

  // deterministic split: every k-th record goes to validation
  const double val_fraction = jtrain.value("val_fraction", 0.2);
  std::vector<TrainSample> train, val;
  const int stride = val_fraction > 0.0
                         ? std::max(2, static_cast<int>(std::lround(1.0 / val_fraction)))
                         : 0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    TrainSample s;
    s.g = records[k].g;
    s.label = records[k].scalars.at(label);
    s.molecule_id = records[k].molecule_id;
    if (stride > 0 && records.size() > 2 && k % static_cast<std::size_t>(stride) == static_cast<std::size_t>(stride) - 1)
      val.push_back(std::move(s));
    else
      train.push_back(std::move(s));
  }

  fs::create_directories(out_dir);
  std::ofstream log(out_dir + "/train.log");
  if (!log) throw std::runtime_error("cannot write log in " + out_dir);
  ParamStore best;
  const TrainResult r = train_scalar(model, train, val, opts, &log, &best);

  save_checkpoint(model, out_dir + "/final.json");
  Model best_model = model;
  best_model.params = best;
  save_checkpoint(best_model, out_dir + "/best.json");

  json summary = {{"train_records", train.size()},
                  {"val_records", val.size()},
                  {"loss_after_first_step", r.loss_after_first_step},
                  {"final_train_loss", r.final_train_loss},
                  {"final_train_mae", r.final_train_mae}};
  if (!val.empty()) summary["best_val_mae"] = r.best_val_mae;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& dataset_path,
                const std::string& out_path, bool forces, const std::string& cube_spec,
                int threads) {
  apply_threads(threads);
  const Model model = load_checkpoint(checkpoint_path);
  const auto records = load_dataset(dataset_path);
  check_coverage(model, records);
  const bool parallel = threads > 1;

  double cube_spacing = 0.0;
  if (!cube_spec.empty()) {
    if (model.head != HeadKind::density)
      throw std::invalid_argument("--density-cube requires a density-head checkpoint");
    std::string v = cube_spec;
    if (v.rfind("spacing=", 0) == 0) v = v.substr(8);
    cube_spacing = std::stod(v);
    if (cube_spacing <= 0.0) throw std::invalid_argument("cube spacing must be positive");
  }
  if (forces && model.head != HeadKind::energy)
    throw std::invalid_argument("--forces requires an energy-head checkpoint");

  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;

  for (const auto& r : records) {
    const Prediction p = predict(model, r.g, parallel);
    json j = {{"line", r.line}, {"molecule_id", r.molecule_id}};
    switch (p.kind) {
      case HeadKind::energy:
        j["energy_hartree"] = p.scalar;
        break;
      case HeadKind::dipole:
        j["dipole_au"] = {p.vec[0], p.vec[1], p.vec[2]};
        break;
      case HeadKind::density: {
        json d = json::array();
        for (const auto& atom : p.density.d) d.push_back(atom);
        j["density_coeffs"] = d;
        break;
      }
      default:
        j["value"] = p.scalar;
    }
    if (forces) {
      const auto F = fd_forces(model, r.g);
      json jf = json::array();
      for (const auto& f : F) jf.push_back({f[0], f[1], f[2]});
      j["forces_hartree_per_bohr"] = jf;
    }
    if (cube_spacing > 0.0) {
      const DensityGrid grid = make_density_grid(r.g, cube_spacing);
      const std::vector<double> field = density_evaluate(p.density, r.g, grid.points(), parallel);
      const std::string cube_path =
          (out_path.empty() ? std::string("density") : out_path) + ".line" +
          std::to_string(r.line) + ".cube";
      write_cube(cube_path, r.g, grid, field, "fitted electron density");
      j["cube_file"] = cube_path;
    }
    out << j.dump() << "\n";
  }
  return 0;
}

int cmd_check(const std::string& suite, unsigned seed, bool inject_cg_bug, int threads) {
  apply_threads(threads);
  CheckOptions opts;
  opts.seed = seed;
  opts.inject_cg_bug = inject_cg_bug;
  const auto cases = run_check_suite(suite, opts);
  write_check_report(std::cout, cases);
  return all_pass(cases) ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_path,
             std::string label, int threads) {
  apply_threads(threads);
  const Model model = load_checkpoint(checkpoint_path);
  const auto records = load_dataset(dataset_path);
  check_coverage(model, records);
  if (label.empty()) label = default_label(model.head);
  double mae = 0.0, rmse = 0.0;
  for (const auto& r : records) {
    if (!r.has_scalar(label))
      throw std::runtime_error("record line " + std::to_string(r.line) + ": missing label '" +
                               label + "'");
    const double err = predict_scalar(model, r.g, threads > 1) - r.scalars.at(label);
    mae += std::abs(err);
    rmse += err * err;
  }
  const auto n = static_cast<double>(records.size());
  json j = {{"records", records.size()},
            {"label", label},
            {"mae", mae / n},
            {"rmse", std::sqrt(rmse / n)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equivariant AO-feature network toolkit"};
  app.require_subcommand(1);

  int threads = 1;
  unsigned seed = 0;
  app.add_option("--threads", threads, "worker threads (1 = bit-exact serial)")->capture_default_str();
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  auto* feat = app.add_subcommand("featurize", "featurize a dataset or generate a toy one");
  std::string f_dataset, f_out;
  int f_toy = 0;
  bool f_fmo = false;
  feat->add_option("--dataset", f_dataset, "input JSON-lines dataset");
  feat->add_option("--out", f_out, "output path (default stdout)");
  feat->add_option("--make-toy", f_toy, "generate N random labeled molecules");
  feat->add_flag("--fmo-features", f_fmo, "include energy-weighted density channels");

  auto* train = app.add_subcommand("train", "fit a model on a labeled dataset");
  std::string t_config, t_dataset, t_out = "run";
  bool t_delta = false, t_fmo = false;
  train->add_option("--config", t_config, "JSON config (model/featurizer/training/head)");
  train->add_option("--dataset", t_dataset, "labeled JSON-lines dataset")->required();
  train->add_option("--out", t_out, "output directory")->capture_default_str();
  train->add_flag("--delta-learning", t_delta, "learn the residual against the baseline energy");
  train->add_flag("--fmo-features", t_fmo, "include energy-weighted density channels");

  auto* pred = app.add_subcommand("predict", "run a checkpoint over a dataset");
  std::string p_ck, p_dataset, p_out, p_cube;
  bool p_forces = false;
  pred->add_option("--checkpoint", p_ck, "checkpoint manifest path")->required();
  pred->add_option("--dataset", p_dataset, "input JSON-lines dataset")->required();
  pred->add_option("--out", p_out, "predictions file (default stdout)");
  pred->add_flag("--forces", p_forces, "finite-difference forces (energy head)");
  pred->add_option("--density-cube", p_cube, "emit cube files, e.g. spacing=0.3");

  auto* check = app.add_subcommand("check", "run property suites");
  std::string c_suite = "all";
  bool c_bug = false;
  check->add_option("--suite", c_suite, "cg|equivariance|gradcheck|extensivity|scaling|all")
      ->capture_default_str();
  check->add_flag("--inject-cg-bug", c_bug, "corrupt one CG entry first (harness sensitivity)");

  auto* eval = app.add_subcommand("eval", "score a checkpoint against labels");
  std::string e_ck, e_dataset, e_label;
  eval->add_option("--checkpoint", e_ck, "checkpoint manifest path")->required();
  eval->add_option("--dataset", e_dataset, "labeled JSON-lines dataset")->required();
  eval->add_option("--label", e_label, "label key (default from head kind)");

  for (CLI::App* sub : {feat, train, pred, check, eval}) sub->fallthrough();
  CLI11_PARSE(app, argc, argv);
  try {
    if (*feat) return cmd_featurize(f_dataset, f_toy, seed, f_out, f_fmo, threads);
    if (*train) return cmd_train(t_config, t_dataset, t_out, seed, t_delta, t_fmo, threads);
    if (*pred) return cmd_predict(p_ck, p_dataset, p_out, p_forces, p_cube, threads);
    if (*check) return cmd_check(c_suite, seed, c_bug, threads);
    if (*eval) return cmd_eval(e_ck, e_dataset, e_label, threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
