#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mura {

// Architecture hyperparameters. Defaults are the base configuration; desk- and
// paper-scale presets live in configs/.
struct ModelConfig {
  int input_h = 128, input_w = 128;              // each divisible by 32
  std::array<int, 4> stage_channels{32, 64, 160, 256};
  std::array<int, 4> stage_depths{2, 2, 2, 2};
  int mura_convs = 3;                            // K chained 3x3 depth-wise convs
  bool mura_enabled = true;
  double mlp_ratio = 4.0;
  int num_seg_classes = 2;                       // includes background
  int num_det_classes = 2;
  int head_hidden = 256;
  bool decoupled_head = true;
  bool spp_enabled = false;
  std::vector<int> det_levels{8, 16, 32};        // subset of {8,16,32}
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError naming the offending field
};

struct TrainConfig {
  int batch_size = 4;
  double max_lr = 0.01;
  double initial_lr = 0.0001;
  double min_lr = 0.000001;
  double weight_decay = 0.0005;
  double momentum = 0.937;
  int total_epochs = 200;
  int warmup_epochs = 10;
  int eval_every = 10;                 // epochs between val evaluations
  std::string checkpoint_dir = "runs";
  uint64_t seed = 0;
  // Extensions beyond the core schedule (see README):
  bool lr_per_step = false;            // per-step LR granularity instead of per-epoch
  std::string obj_target = "iou";      // "iou" or "binary" objectness target
  double route_small = 64.0;           // assignment: longest side < route_small -> stride 8
  double route_medium = 128.0;         //             < route_medium -> stride 16, else 32
  double stop_iou = 0.0;               // early stop once val IoU and mAP@0.5 both
  double stop_map = 0.0;               // reach these (0 disables)

  void validate() const;
};

// Synthetic floor-plan generator knobs plus the split sizes the CLI writes.
struct SynthConfig {
  int canvas_h = 128, canvas_w = 128;  // divisible by 32
  int rooms_min = 2, rooms_max = 5;
  int wall_min = 3, wall_max = 5;      // wall thickness, px
  int doors_min = 1, doors_max = 3;
  int windows_min = 1, windows_max = 3;
  double line_noise = 0.0;             // Gaussian sigma in [0,1] intensity units
  uint64_t seed = 0;
  int train_count = 40, val_count = 5, test_count = 5;

  void validate() const;
};

struct EvalConfig {
  double conf_threshold = 0.25;
  double nms_iou = 0.45;
  std::string interpolation = "all_point";  // or "eleven_point"
  std::string split = "val";

  void validate() const;
};

// One config document drives every subcommand; sections are independent.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  EvalConfig eval;
  std::string data_root = "data";

  void validate() const;
};

// Strict parsing: unknown keys anywhere are a ConfigError; values are
// type-checked. Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& doc);
nlohmann::json model_config_to_json(const ModelConfig& cfg);
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Applies a dotted override like "train.total_epochs=2" onto a JSON document.
// The value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& doc, const std::string& spec);

}  // namespace mura
