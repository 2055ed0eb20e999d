#pragma once

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

#include "muranet/dataset.hpp"
#include "muranet/heads.hpp"

namespace mura {

// Micro IoU for one class on a single pair of class maps:
// |pred==c AND gt==c| / |pred==c OR gt==c|, 1.0 when both sets are empty.
double mask_iou(const MaskImage& pred, const MaskImage& gt, int class_id);

// One scored detection for AP computation; image_id indexes the gt list.
struct ScoredDet {
  int image_id = 0;
  double score = 0;
  Box box;
};

// Average precision for one class. Greedy matching in descending score order
// (IoU ties broken toward the lowest gt index), all-point (precision
// envelope) interpolation by default, 11-point behind the flag. Returns
// nullopt when the class has neither ground truth nor detections.
std::optional<double> average_precision(std::vector<ScoredDet> dets,
                                        const std::vector<std::vector<Box>>& gt,
                                        double iou_threshold, bool eleven_point = false);

struct MetricsReport {
  std::vector<double> class_iou;  // per seg class, micro-averaged over pixels
  double mean_iou = 0;
  std::vector<std::optional<double>> class_ap50;  // nullopt: no gt, no detections
  std::vector<std::optional<double>> class_ap;    // AP@[.5:.95], mean of 10 thresholds
  double mean_ap50 = 0;  // arithmetic over defined classes, 0 when none defined
  double mean_ap = 0;
  int64_t images = 0, gt_boxes = 0, detections = 0;
};

// Inference adapter so `evaluate` can run both the real model and oracles.
struct SamplePrediction {
  MaskImage mask;               // predicted class map
  std::vector<Detection> dets;  // after confidence filter + NMS
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual SamplePrediction predict(const Sample& s) = 0;
};

// Runs the network in inference mode: argmax over seg logits, then
// sigmoid/exp decode with confidence filter and class-wise NMS.
class ModelPredictor : public Predictor {
 public:
  ModelPredictor(Model& model, double conf_threshold, double nms_iou)
      : model_(model), conf_(conf_threshold), nms_(nms_iou) {}
  SamplePrediction predict(const Sample& s) override;

 private:
  Model& model_;
  double conf_, nms_;
};

// Echoes the ground truth back (mask as-is, gt boxes at score 1.0).
class OraclePredictor : public Predictor {
 public:
  SamplePrediction predict(const Sample& s) override;
};

// Dataset-level metrics: micro-averaged IoU per seg class, AP@0.5 and
// AP@[.5:.95] per det class. Throws DataError on an empty sample list.
MetricsReport evaluate(Predictor& predictor, const std::vector<Sample>& samples,
                       int num_seg_classes, int num_det_classes, bool eleven_point = false);

nlohmann::json report_to_json(const MetricsReport& r);
std::string report_table(const MetricsReport& r);

}  // namespace mura
