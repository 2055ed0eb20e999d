#pragma once

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "muranet/config.hpp"
#include "muranet/losses.hpp"
#include "muranet/metrics.hpp"

namespace mura {

struct EpochRecord {
  int epoch = 0;  // 1-based
  double seg = 0, det_bbox = 0, det_cls = 0, det_obj = 0, total = 0;  // means over steps
  double lr = 0;  // value used at the start of the epoch
  std::optional<double> val_iou;    // wall IoU on val, when evaluated
  std::optional<double> val_map50;  // mAP@0.5 on val, when evaluated
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<int> convergence_epoch_iou;  // per the paper's 99.9%/0.2% rule
  std::optional<int> convergence_epoch_map;
  double wall_seconds = 0;
  std::string best_checkpoint, last_checkpoint;
  double best_metric = 0;  // mean of (val IoU, val mAP@0.5) at the best epoch
  int dropped_targets = 0;
  bool early_stopped = false;
};

// Optional per-epoch hook (CLI progress printing, tests).
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_epoch(const EpochRecord& record) = 0;
};

// Full optimization loop: SGD + momentum, decoupled weight decay on conv and
// linear weights only, linear warmup + cosine decay, Eq. 3 total loss. Class
// weights are computed once from the train split before epoch 1. Writes
// metrics.csv plus best/last checkpoints under train.checkpoint_dir.
TrainReport train_run(const RunConfig& cfg, TrainObserver* observer = nullptr);

nlohmann::json train_report_to_json(const TrainReport& report);

}  // namespace mura
