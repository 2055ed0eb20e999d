#include "muranet/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "muranet/errors.hpp"

namespace mura {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& known) {
  if (!obj.is_object()) throw ConfigError("section '" + section + "' must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in section '" + section + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value type for '") + key + "'");
  }
}

void read_pair(const json& obj, const char* key, int& a, int& b) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    throw ConfigError(std::string("'") + key + "' must be a [int, int] pair");
  a = v[0].get<int>();
  b = v[1].get<int>();
}

template <size_t N>
void read_array(const json& obj, const char* key, std::array<int, N>& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != N)
    throw ConfigError(std::string("'") + key + "' must be an array of " + std::to_string(N) + " ints");
  for (size_t i = 0; i < N; ++i) {
    if (!v[i].is_number_integer()) throw ConfigError(std::string("'") + key + "' must hold ints");
    out[i] = v[i].get<int>();
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (input_h <= 0 || input_h % 32 != 0 || input_w <= 0 || input_w % 32 != 0)
    throw ConfigError("input_size not divisible by 32");
  for (int c : stage_channels)
    if (c <= 0) throw ConfigError("stage_channels must be positive");
  for (size_t i = 1; i < stage_channels.size(); ++i)
    if (stage_channels[i] < stage_channels[i - 1])
      throw ConfigError("stage_channels must be non-decreasing");
  for (int d : stage_depths)
    if (d < 1) throw ConfigError("stage_depths must be >= 1");
  if (mura_convs < 1) throw ConfigError("mura_convs must be >= 1");
  if (mlp_ratio <= 0) throw ConfigError("mlp_ratio must be positive");
  if (num_seg_classes < 2) throw ConfigError("num_seg_classes must be >= 2");
  if (num_det_classes < 1) throw ConfigError("num_det_classes must be >= 1");
  if (head_hidden < 1) throw ConfigError("head_hidden must be >= 1");
  if (det_levels.empty()) throw ConfigError("det_levels must not be empty");
  for (int s : det_levels)
    if (s != 8 && s != 16 && s != 32) throw ConfigError("det_levels entries must be in {8,16,32}");
  std::vector<int> sorted = det_levels;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("det_levels entries must be distinct");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(0 < initial_lr && initial_lr <= max_lr)) throw ConfigError("need 0 < initial_lr <= max_lr");
  if (min_lr > max_lr) throw ConfigError("need min_lr <= max_lr");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0,1)");
  if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= total_epochs)
    throw ConfigError("need 0 <= warmup_epochs < total_epochs");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (obj_target != "iou" && obj_target != "binary")
    throw ConfigError("obj_target must be 'iou' or 'binary'");
  if (route_small <= 0 || route_medium <= route_small)
    throw ConfigError("need 0 < route_small < route_medium");
  if (stop_iou < 0 || stop_iou > 1 || stop_map < 0 || stop_map > 1)
    throw ConfigError("stop thresholds must be in [0,1]");
}

void SynthConfig::validate() const {
  if (canvas_h <= 0 || canvas_h % 32 != 0 || canvas_w <= 0 || canvas_w % 32 != 0)
    throw ConfigError("canvas not divisible by 32");
  if (rooms_min < 1 || rooms_max < rooms_min) throw ConfigError("rooms range empty");
  if (wall_min < 1 || wall_max < wall_min) throw ConfigError("wall_thickness range empty");
  if (doors_min < 0 || doors_max < doors_min) throw ConfigError("doors_per_plan range empty");
  if (windows_min < 0 || windows_max < windows_min) throw ConfigError("windows_per_plan range empty");
  if (line_noise < 0) throw ConfigError("line_noise must be >= 0");
  if (train_count < 0 || val_count < 0 || test_count < 0) throw ConfigError("split counts must be >= 0");
  // Walls must leave room for at least one room cell of ~8 px.
  if (canvas_h < 4 * wall_max + 8 || canvas_w < 4 * wall_max + 8)
    throw ConfigError("canvas too small for wall thickness: walls would overlap completely");
}

void EvalConfig::validate() const {
  if (conf_threshold <= 0 || conf_threshold >= 1) throw ConfigError("conf_threshold must be in (0,1)");
  if (nms_iou <= 0 || nms_iou >= 1) throw ConfigError("nms_iou must be in (0,1)");
  if (interpolation != "all_point" && interpolation != "eleven_point")
    throw ConfigError("interpolation must be 'all_point' or 'eleven_point'");
  if (split != "train" && split != "val" && split != "test")
    throw ConfigError("split must be one of train/val/test");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  synth.validate();
  eval.validate();
  if (data_root.empty()) throw ConfigError("data_root must not be empty");
}

ModelConfig model_config_from_json(const json& m) {
  check_keys(m, "model",
             {"input_size", "stage_channels", "stage_depths", "mura_convs", "mura_enabled",
              "mlp_ratio", "num_seg_classes", "num_det_classes", "head_hidden", "decoupled_head",
              "spp_enabled", "det_levels", "seed"});
  ModelConfig cfg;
  read_pair(m, "input_size", cfg.input_h, cfg.input_w);
  read_array(m, "stage_channels", cfg.stage_channels);
  read_array(m, "stage_depths", cfg.stage_depths);
  read(m, "mura_convs", cfg.mura_convs);
  read(m, "mura_enabled", cfg.mura_enabled);
  read(m, "mlp_ratio", cfg.mlp_ratio);
  read(m, "num_seg_classes", cfg.num_seg_classes);
  read(m, "num_det_classes", cfg.num_det_classes);
  read(m, "head_hidden", cfg.head_hidden);
  read(m, "decoupled_head", cfg.decoupled_head);
  read(m, "spp_enabled", cfg.spp_enabled);
  read(m, "det_levels", cfg.det_levels);
  read(m, "seed", cfg.seed);
  return cfg;
}

json model_config_to_json(const ModelConfig& cfg) {
  json m;
  m["input_size"] = {cfg.input_h, cfg.input_w};
  m["stage_channels"] = cfg.stage_channels;
  m["stage_depths"] = cfg.stage_depths;
  m["mura_convs"] = cfg.mura_convs;
  m["mura_enabled"] = cfg.mura_enabled;
  m["mlp_ratio"] = cfg.mlp_ratio;
  m["num_seg_classes"] = cfg.num_seg_classes;
  m["num_det_classes"] = cfg.num_det_classes;
  m["head_hidden"] = cfg.head_hidden;
  m["decoupled_head"] = cfg.decoupled_head;
  m["spp_enabled"] = cfg.spp_enabled;
  m["det_levels"] = cfg.det_levels;
  m["seed"] = cfg.seed;
  return m;
}

RunConfig parse_run_config(const json& doc) {
  check_keys(doc, "(root)", {"model", "train", "synth", "eval", "data_root"});
  RunConfig cfg;
  if (doc.contains("data_root")) {
    if (!doc.at("data_root").is_string()) throw ConfigError("bad value type for 'data_root'");
    cfg.data_root = doc.at("data_root").get<std::string>();
  }
  if (doc.contains("model")) cfg.model = model_config_from_json(doc.at("model"));
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t, "train",
               {"batch_size", "max_lr", "initial_lr", "min_lr", "weight_decay", "momentum",
                "total_epochs", "warmup_epochs", "eval_every", "checkpoint_dir", "seed",
                "lr_per_step", "obj_target", "route_small", "route_medium", "stop_iou", "stop_map"});
    read(t, "batch_size", cfg.train.batch_size);
    read(t, "max_lr", cfg.train.max_lr);
    read(t, "initial_lr", cfg.train.initial_lr);
    read(t, "min_lr", cfg.train.min_lr);
    read(t, "weight_decay", cfg.train.weight_decay);
    read(t, "momentum", cfg.train.momentum);
    read(t, "total_epochs", cfg.train.total_epochs);
    read(t, "warmup_epochs", cfg.train.warmup_epochs);
    read(t, "eval_every", cfg.train.eval_every);
    read(t, "checkpoint_dir", cfg.train.checkpoint_dir);
    read(t, "seed", cfg.train.seed);
    read(t, "lr_per_step", cfg.train.lr_per_step);
    read(t, "obj_target", cfg.train.obj_target);
    read(t, "route_small", cfg.train.route_small);
    read(t, "route_medium", cfg.train.route_medium);
    read(t, "stop_iou", cfg.train.stop_iou);
    read(t, "stop_map", cfg.train.stop_map);
  }
  if (doc.contains("synth")) {
    const json& s = doc.at("synth");
    check_keys(s, "synth",
               {"canvas", "rooms", "wall_thickness", "doors_per_plan", "windows_per_plan",
                "line_noise", "seed", "counts"});
    read_pair(s, "canvas", cfg.synth.canvas_h, cfg.synth.canvas_w);
    read_pair(s, "rooms", cfg.synth.rooms_min, cfg.synth.rooms_max);
    read_pair(s, "wall_thickness", cfg.synth.wall_min, cfg.synth.wall_max);
    read_pair(s, "doors_per_plan", cfg.synth.doors_min, cfg.synth.doors_max);
    read_pair(s, "windows_per_plan", cfg.synth.windows_min, cfg.synth.windows_max);
    read(s, "line_noise", cfg.synth.line_noise);
    read(s, "seed", cfg.synth.seed);
    if (s.contains("counts")) {
      const json& c = s.at("counts");
      check_keys(c, "synth.counts", {"train", "val", "test"});
      read(c, "train", cfg.synth.train_count);
      read(c, "val", cfg.synth.val_count);
      read(c, "test", cfg.synth.test_count);
    }
  }
  if (doc.contains("eval")) {
    const json& e = doc.at("eval");
    check_keys(e, "eval", {"conf_threshold", "nms_iou", "interpolation", "split"});
    read(e, "conf_threshold", cfg.eval.conf_threshold);
    read(e, "nms_iou", cfg.eval.nms_iou);
    read(e, "interpolation", cfg.eval.interpolation);
    read(e, "split", cfg.eval.split);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

json run_config_to_json(const RunConfig& cfg) {
  json doc;
  doc["data_root"] = cfg.data_root;
  doc["model"] = model_config_to_json(cfg.model);
  json& t = doc["train"];
  t["batch_size"] = cfg.train.batch_size;
  t["max_lr"] = cfg.train.max_lr;
  t["initial_lr"] = cfg.train.initial_lr;
  t["min_lr"] = cfg.train.min_lr;
  t["weight_decay"] = cfg.train.weight_decay;
  t["momentum"] = cfg.train.momentum;
  t["total_epochs"] = cfg.train.total_epochs;
  t["warmup_epochs"] = cfg.train.warmup_epochs;
  t["eval_every"] = cfg.train.eval_every;
  t["checkpoint_dir"] = cfg.train.checkpoint_dir;
  t["seed"] = cfg.train.seed;
  t["lr_per_step"] = cfg.train.lr_per_step;
  t["obj_target"] = cfg.train.obj_target;
  t["route_small"] = cfg.train.route_small;
  t["route_medium"] = cfg.train.route_medium;
  t["stop_iou"] = cfg.train.stop_iou;
  t["stop_map"] = cfg.train.stop_map;
  json& s = doc["synth"];
  s["canvas"] = {cfg.synth.canvas_h, cfg.synth.canvas_w};
  s["rooms"] = {cfg.synth.rooms_min, cfg.synth.rooms_max};
  s["wall_thickness"] = {cfg.synth.wall_min, cfg.synth.wall_max};
  s["doors_per_plan"] = {cfg.synth.doors_min, cfg.synth.doors_max};
  s["windows_per_plan"] = {cfg.synth.windows_min, cfg.synth.windows_max};
  s["line_noise"] = cfg.synth.line_noise;
  s["seed"] = cfg.synth.seed;
  s["counts"] = {{"train", cfg.synth.train_count}, {"val", cfg.synth.val_count}, {"test", cfg.synth.test_count}};
  json& e = doc["eval"];
  e["conf_threshold"] = cfg.eval.conf_threshold;
  e["nms_iou"] = cfg.eval.nms_iou;
  e["interpolation"] = cfg.eval.interpolation;
  e["split"] = cfg.eval.split;
  return doc;
}

void apply_override(json& doc, const std::string& spec) {
  const size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like section.key=value: " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings pass through
  }
  json* node = &doc;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key segment in override: " + spec);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace mura
