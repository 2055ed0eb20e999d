#pragma once

#include <optional>
#include <vector>

#include "muranet/box.hpp"
#include "muranet/config.hpp"
#include "muranet/model.hpp"

namespace mura {

// Raw per-level detection maps. cls (B,D,h,w), box (B,4,h,w) as
// (t_x,t_y,t_w,t_h), obj (B,1,h,w); all logits/regressands.
struct DetLevelPred {
  int stride = 0;
  Tensor cls, box, obj;
};

struct Detection {
  int class_id = 0;
  double score = 0;
  Box box;
};

// Segmentation decoder over the stride-8/16/32 levels; stage-1 features are
// never read. Four upsample-conv layers (x2 + fuse16, x2 + fuse8, x2, x4),
// each conv+norm+GELU, then a 1x1 classifier at full resolution.
class SegDecoder {
 public:
  explicit SegDecoder(const ModelConfig& cfg);

  Tensor forward(const Pyramid& pyr, Mode mode);  // -> (B, S, H, W)
  // Returns gradients for strides (8, 16, 32) in that order.
  std::array<Tensor, 3> backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

 private:
  PwConv fuse0_, fuse1_;
  Conv2d conv2_, conv3_;
  ChannelNorm n0_, n1_, n2_, n3_;
  Gelu g0_, g1_, g2_, g3_;
  PwConv cls_;
  std::array<int, 2> sz32_{}, sz16_{}, sz8_{}, sz4_{}, szfull_{};
  int c1_ = 0, c2_ = 0, c3_ = 0;
};

// Detection head over the configured levels. Decoupled: shared 1x1 stem to
// head_hidden, then separate cls / reg branches of two 3x3 convs; objectness
// comes off the regression trunk. Coupled: one trunk, one (D+5)-channel 1x1.
class DetHead {
 public:
  explicit DetHead(const ModelConfig& cfg);

  std::vector<DetLevelPred> forward(const Pyramid& pyr, Mode mode);
  // d_preds aligned with forward's output; returns per-stride input gradients
  // aligned with cfg.det_levels.
  std::vector<Tensor> backward(const std::vector<DetLevelPred>& d_preds);
  void collect(std::vector<Param*>& out);

 private:
  struct Level {
    int stride;
    // decoupled
    std::optional<PwConv> stem;
    std::optional<ChannelNorm> stem_norm;
    std::optional<Gelu> stem_act;
    std::vector<Conv2d> cls_convs, reg_convs;
    std::vector<ChannelNorm> cls_norms, reg_norms;
    std::vector<Gelu> cls_acts, reg_acts;
    std::optional<PwConv> cls_pred, box_pred, obj_pred;
    // coupled
    std::vector<Conv2d> trunk_convs;
    std::vector<ChannelNorm> trunk_norms;
    std::vector<Gelu> trunk_acts;
    std::optional<PwConv> pred;
  };
  std::vector<Level> levels_;
  bool decoupled_;
  int num_classes_;
};

// Anchor-free box transform at one cell. (i,j) = (row, col).
Box decode_box(double tx, double ty, double tw, double th, int i, int j, int stride);
// Inverse: center offsets clamped to [1e-6, 1-1e-6] before the logit.
std::array<double, 4> encode_box(const Box& b, int i, int j, int stride);

// Greedy class-wise NMS; input in any order, output sorted by descending score.
std::vector<Detection> nms(std::vector<Detection> dets, double nms_iou);

// Full decode: sigmoid/exp transform, confidence filter, class-wise NMS.
// Returns one list per batch image, each sorted by descending score.
std::vector<std::vector<Detection>> decode_detections(const std::vector<DetLevelPred>& pred,
                                                      double conf_threshold, double nms_iou);

// The complete multi-task network.
struct ModelOutput {
  Tensor seg_logits;
  std::vector<DetLevelPred> det;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);  // builds and deterministically initializes params

  Pyramid backbone_forward(const Tensor& image, Mode mode) { return backbone_.forward(image, mode); }
  ModelOutput forward(const Tensor& image, Mode mode);
  // After forward(kTrain): accumulates parameter gradients; d_det may be empty
  // tensors for unused components.
  void backward(const Tensor& d_seg, const std::vector<DetLevelPred>& d_det);
  void zero_grad();

  const ModelConfig& config() const { return cfg_; }
  std::vector<Param*>& params() { return params_; }
  SegDecoder& seg_decoder() { return seg_; }
  DetHead& det_head() { return det_; }
  Backbone& backbone() { return backbone_; }

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  SegDecoder seg_;
  DetHead det_;
  std::vector<Param*> params_;
};

}  // namespace mura
