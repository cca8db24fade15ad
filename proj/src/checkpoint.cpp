#include "unite/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace unite {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void put_le64(std::ostream& out, double x) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &x, sizeof(bits));
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_le64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint blob truncated");
  std::uint64_t bits = 0;
  for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  double x = 0.0;
  std::memcpy(&x, &bits, sizeof(x));
  return x;
}

json channels_to_json(const ChannelSpec& s) {
  json plus = json::array(), minus = json::array();
  for (int l = 0; l <= o3::kLMax; ++l) {
    plus.push_back(s.count(l, 0));
    minus.push_back(s.count(l, 1));
  }
  return {{"p_plus", plus}, {"p_minus", minus}};
}

ChannelSpec channels_from_json(const json& j) {
  ChannelSpec s;
  for (int l = 0; l <= o3::kLMax; ++l) {
    s.counts[static_cast<std::size_t>(l)][0] = j.at("p_plus").at(l).get<int>();
    s.counts[static_cast<std::size_t>(l)][1] = j.at("p_minus").at(l).get<int>();
  }
  return s;
}

}  // namespace

std::string checkpoint_blob_path(const std::string& manifest_path) {
  const auto dot = manifest_path.rfind('.');
  const auto slash = manifest_path.find_last_of("/\\");
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash))
    return manifest_path.substr(0, dot) + ".bin";
  return manifest_path + ".bin";
}

void save_checkpoint(const Model& model, const std::string& manifest_path) {
  json j;
  j["format_version"] = kFormatVersion;
  j["model"] = {{"n_in", model.cfg.n_in},       {"t1", model.cfg.t1},
                {"t2", model.cfg.t2},           {"I", model.cfg.I},
                {"J", model.cfg.J},             {"n_xi", model.cfg.n_xi},
                {"att_dim", model.cfg.att_dim}, {"zero_init_output", model.cfg.zero_init_output},
                {"channels", channels_to_json(model.cfg.channels)}};
  j["head"] = to_string(model.head);
  j["mo_attention"] = model.attention_kind == MoAttentionKind::exponential ? "exponential" : "linear";
  j["delta_learning"] = model.delta_learning;
  j["fmo_features"] = model.fcfg.fmo_features;
  j["elements"] = model.elements;
  json params = json::array();
  std::size_t n_values = 0;
  for (const auto& arr : model.params.arrays()) {
    params.push_back({{"name", arr.name}, {"shape", arr.shape}, {"trainable", arr.trainable}});
    n_values += arr.v.size();
  }
  j["params"] = std::move(params);
  j["blob_doubles"] = n_values;

  std::ofstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot write checkpoint manifest: " + manifest_path);
  mf << j.dump(2) << "\n";

  const std::string blob = checkpoint_blob_path(manifest_path);
  std::ofstream bf(blob, std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write checkpoint blob: " + blob);
  for (const auto& arr : model.params.arrays())
    for (double x : arr.v) put_le64(bf, x);
}

Model load_checkpoint(const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot open checkpoint manifest: " + manifest_path);
  json j;
  try {
    mf >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (j.value("format_version", -1) != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version");

  Model m;
  const json& mc = j.at("model");
  m.cfg.channels = channels_from_json(mc.at("channels"));
  m.cfg.n_in = mc.at("n_in").get<int>();
  m.cfg.t1 = mc.at("t1").get<int>();
  m.cfg.t2 = mc.at("t2").get<int>();
  m.cfg.I = mc.at("I").get<int>();
  m.cfg.J = mc.at("J").get<int>();
  m.cfg.n_xi = mc.at("n_xi").get<int>();
  m.cfg.att_dim = mc.at("att_dim").get<int>();
  m.cfg.zero_init_output = mc.at("zero_init_output").get<bool>();
  m.head = head_kind_from_string(j.at("head").get<std::string>());
  m.attention_kind = j.value("mo_attention", "exponential") == std::string("linear")
                         ? MoAttentionKind::linear
                         : MoAttentionKind::exponential;
  m.delta_learning = j.at("delta_learning").get<bool>();
  m.fcfg.fmo_features = j.at("fmo_features").get<bool>();
  m.elements = j.at("elements").get<std::vector<int>>();

  const std::string blob = checkpoint_blob_path(manifest_path);
  std::ifstream bf(blob, std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open checkpoint blob: " + blob);
  std::size_t n_values = 0;
  for (const json& pj : j.at("params")) {
    ParamArray arr;
    arr.name = pj.at("name").get<std::string>();
    arr.shape = pj.at("shape").get<std::vector<int>>();
    arr.trainable = pj.at("trainable").get<bool>();
    std::size_t n = 1;
    for (int s : arr.shape) n *= static_cast<std::size_t>(s);
    arr.v.resize(n);
    for (double& x : arr.v) x = get_le64(bf);
    n_values += n;
    m.params.add(std::move(arr));
  }
  if (n_values != j.at("blob_doubles").get<std::size_t>())
    throw std::runtime_error("checkpoint manifest value count mismatch");
  char extra;
  if (bf.read(&extra, 1))
    throw std::runtime_error("checkpoint blob longer than manifest declares");
  return m;
}

}  // namespace unite
