#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "muranet/box.hpp"
#include "muranet/heads.hpp"
#include "muranet/tensor.hpp"

namespace mura {

// Frequency weights from Eq. 2: w_i = (N - N_i) / sum_j (N - N_j).
struct ClassWeightTable {
  std::vector<double> weights;
  std::vector<int64_t> pixel_counts;
  int64_t total = 0;
};

ClassWeightTable seg_class_weights(const std::vector<int64_t>& pixel_counts);

// Weighted softmax cross entropy (Eq. 1), MEAN over all pixels of the batch.
// log argument clamped at 1e-12. When d_logits is given it is filled with
// d(loss)/d(logits).
double seg_weighted_ce(const Tensor& logits, const std::vector<MaskImage>& masks,
                       const ClassWeightTable& weights, Tensor* d_logits = nullptr);

struct AssignConfig {
  int input_h = 0, input_w = 0;
  std::vector<int> det_levels{8, 16, 32};  // must match head level order
  double route_small = 64.0;               // longest side < this -> stride 8
  double route_medium = 128.0;             // < this -> stride 16, else 32
};

// Ground-truth routing result; level order matches AssignConfig::det_levels.
struct LevelTargets {
  int stride = 0, h = 0, w = 0;
  struct Positive {
    int cell = 0;  // i * w + j
    int class_id = 0;
    Box gt;
    std::array<double, 4> t{};  // encoded (t_x, t_y, t_w, t_h)
  };
  std::vector<Positive> positives;  // sorted by cell
};

struct DetTargets {
  std::vector<LevelTargets> levels;
  int dropped = 0;  // boxes lost to same-cell collisions (larger area kept)
};

DetTargets assign_targets(const std::vector<GtBox>& boxes, const AssignConfig& cfg);

struct LossBreakdown {
  double seg = 0, det_bbox = 0, det_cls = 0, det_obj = 0;
  double total = 0;
};

// Detection loss over a batch: bbox = mean over positives of (1 - IoU);
// cls = BCE at positives (summed over classes, mean over positives);
// obj = BCE over ALL cells, target = IoU of the decoded box at positives
// (or 1.0 when iou_obj_target is false) and 0 elsewhere. The IoU target is
// not detached: its gradient flows into the box regressands. Fills d_pred
// with gradients when given (tensors allocated to match pred).
LossBreakdown detection_loss(const std::vector<DetLevelPred>& pred,
                             const std::vector<DetTargets>& targets, bool iou_obj_target = true,
                             std::vector<DetLevelPred>* d_pred = nullptr);

// Eq. 3: plain sum. Throws NumericError on non-finite inputs.
double total_loss(double seg, const LossBreakdown& det);

}  // namespace mura
