#include "muranet/heads.hpp"

#include <algorithm>
#include <cmath>

#include "muranet/errors.hpp"

namespace mura {

namespace {

int level_index(int stride) {
  switch (stride) {
    case 8: return 1;
    case 16: return 2;
    case 32: return 3;
    default: throw ConfigError("unknown detection level stride " + std::to_string(stride));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SegDecoder

SegDecoder::SegDecoder(const ModelConfig& cfg)
    : fuse0_("decoder/up0/fuse", cfg.stage_channels[3] + cfg.stage_channels[2], cfg.stage_channels[2], true),
      fuse1_("decoder/up1/fuse", cfg.stage_channels[2] + cfg.stage_channels[1], cfg.stage_channels[1], true),
      conv2_("decoder/up2/conv", cfg.stage_channels[1], cfg.stage_channels[0], 3, 1, 1, true),
      conv3_("decoder/up3/conv", cfg.stage_channels[0], cfg.stage_channels[0], 3, 1, 1, true),
      n0_("decoder/up0/norm", cfg.stage_channels[2]),
      n1_("decoder/up1/norm", cfg.stage_channels[1]),
      n2_("decoder/up2/norm", cfg.stage_channels[0]),
      n3_("decoder/up3/norm", cfg.stage_channels[0]),
      cls_("decoder/cls", cfg.stage_channels[0], cfg.num_seg_classes, true),
      c1_(cfg.stage_channels[1]),
      c2_(cfg.stage_channels[2]),
      c3_(cfg.stage_channels[3]) {}

Tensor SegDecoder::forward(const Pyramid& pyr, Mode mode) {
  const Tensor& p8 = pyr.maps[1];
  const Tensor& p16 = pyr.maps[2];
  const Tensor& p32 = pyr.maps[3];
  if (p8.empty() || p16.empty() || p32.empty()) throw ShapeError("seg decoder: missing pyramid level");
  sz32_ = {p32.dim(2), p32.dim(3)};
  sz16_ = {p16.dim(2), p16.dim(3)};
  sz8_ = {p8.dim(2), p8.dim(3)};
  sz4_ = {p8.dim(2) * 2, p8.dim(3) * 2};
  szfull_ = {sz4_[0] * 4, sz4_[1] * 4};

  Tensor u0 = bilinear_resize(p32, sz16_[0], sz16_[1]);
  Tensor cat0 = concat_channels({&u0, &p16});
  Tensor a0 = g0_.forward(n0_.forward(fuse0_.forward(cat0, mode), mode), mode);

  Tensor u1 = bilinear_resize(a0, sz8_[0], sz8_[1]);
  Tensor cat1 = concat_channels({&u1, &p8});
  Tensor a1 = g1_.forward(n1_.forward(fuse1_.forward(cat1, mode), mode), mode);

  Tensor u2 = bilinear_resize(a1, sz4_[0], sz4_[1]);
  Tensor a2 = g2_.forward(n2_.forward(conv2_.forward(u2, mode), mode), mode);

  Tensor u3 = bilinear_resize(a2, szfull_[0], szfull_[1]);
  Tensor a3 = g3_.forward(n3_.forward(conv3_.forward(u3, mode), mode), mode);

  return cls_.forward(a3, mode);
}

std::array<Tensor, 3> SegDecoder::backward(const Tensor& gy) {
  Tensor d = cls_.backward(gy);
  d = conv3_.backward(n3_.backward(g3_.backward(d)));
  d = bilinear_resize_backward(d, sz4_[0], sz4_[1]);
  d = conv2_.backward(n2_.backward(g2_.backward(d)));
  d = bilinear_resize_backward(d, sz8_[0], sz8_[1]);
  d = fuse1_.backward(n1_.backward(g1_.backward(d)));
  std::vector<Tensor> s1 = split_channels(d, {c2_, c1_});
  Tensor d_p8 = std::move(s1[1]);
  d = bilinear_resize_backward(s1[0], sz16_[0], sz16_[1]);
  d = fuse0_.backward(n0_.backward(g0_.backward(d)));
  std::vector<Tensor> s0 = split_channels(d, {c3_, c2_});
  Tensor d_p16 = std::move(s0[1]);
  Tensor d_p32 = bilinear_resize_backward(s0[0], sz32_[0], sz32_[1]);
  return {std::move(d_p8), std::move(d_p16), std::move(d_p32)};
}

void SegDecoder::collect(std::vector<Param*>& out) {
  fuse0_.collect(out);
  n0_.collect(out);
  fuse1_.collect(out);
  n1_.collect(out);
  conv2_.collect(out);
  n2_.collect(out);
  conv3_.collect(out);
  n3_.collect(out);
  cls_.collect(out);
}

// ---------------------------------------------------------------------------
// DetHead

DetHead::DetHead(const ModelConfig& cfg)
    : decoupled_(cfg.decoupled_head), num_classes_(cfg.num_det_classes) {
  const int hh = cfg.head_hidden;
  for (int stride : cfg.det_levels) {
    const int in_ch = cfg.stage_channels[level_index(stride)];
    const std::string base = "det/l" + std::to_string(stride);
    Level lv;
    lv.stride = stride;
    if (decoupled_) {
      lv.stem.emplace(base + "/stem", in_ch, hh, true);
      lv.stem_norm.emplace(base + "/stem_norm", hh);
      lv.stem_act.emplace();
      for (int k = 0; k < 2; ++k) {
        lv.cls_convs.emplace_back(base + "/cls" + std::to_string(k), hh, hh, 3, 1, 1, true);
        lv.cls_norms.emplace_back(base + "/cls" + std::to_string(k) + "_norm", hh);
        lv.cls_acts.emplace_back();
        lv.reg_convs.emplace_back(base + "/reg" + std::to_string(k), hh, hh, 3, 1, 1, true);
        lv.reg_norms.emplace_back(base + "/reg" + std::to_string(k) + "_norm", hh);
        lv.reg_acts.emplace_back();
      }
      lv.cls_pred.emplace(base + "/cls_pred", hh, cfg.num_det_classes, true);
      lv.box_pred.emplace(base + "/box_pred", hh, 4, true);
      lv.obj_pred.emplace(base + "/obj_pred", hh, 1, true);
    } else {
      int tin = in_ch;
      for (int k = 0; k < 2; ++k) {
        lv.trunk_convs.emplace_back(base + "/trunk" + std::to_string(k), tin, hh, 3, 1, 1, true);
        lv.trunk_norms.emplace_back(base + "/trunk" + std::to_string(k) + "_norm", hh);
        lv.trunk_acts.emplace_back();
        tin = hh;
      }
      lv.pred.emplace(base + "/pred", hh, cfg.num_det_classes + 5, true);
    }
    levels_.push_back(std::move(lv));
  }
}

std::vector<DetLevelPred> DetHead::forward(const Pyramid& pyr, Mode mode) {
  std::vector<DetLevelPred> out;
  for (Level& lv : levels_) {
    const Tensor& x = pyr.maps[level_index(lv.stride)];
    if (x.empty()) throw ShapeError("det head: missing stride-" + std::to_string(lv.stride) + " level");
    DetLevelPred p;
    p.stride = lv.stride;
    if (decoupled_) {
      Tensor f = lv.stem_act->forward(lv.stem_norm->forward(lv.stem->forward(x, mode), mode), mode);
      Tensor c = f;
      for (size_t k = 0; k < lv.cls_convs.size(); ++k)
        c = lv.cls_acts[k].forward(lv.cls_norms[k].forward(lv.cls_convs[k].forward(c, mode), mode), mode);
      p.cls = lv.cls_pred->forward(c, mode);
      Tensor r = f;
      for (size_t k = 0; k < lv.reg_convs.size(); ++k)
        r = lv.reg_acts[k].forward(lv.reg_norms[k].forward(lv.reg_convs[k].forward(r, mode), mode), mode);
      p.box = lv.box_pred->forward(r, mode);
      p.obj = lv.obj_pred->forward(r, mode);
    } else {
      Tensor t = x;
      for (size_t k = 0; k < lv.trunk_convs.size(); ++k)
        t = lv.trunk_acts[k].forward(lv.trunk_norms[k].forward(lv.trunk_convs[k].forward(t, mode), mode), mode);
      Tensor all = lv.pred->forward(t, mode);
      std::vector<Tensor> parts = split_channels(all, {num_classes_, 4, 1});
      p.cls = std::move(parts[0]);
      p.box = std::move(parts[1]);
      p.obj = std::move(parts[2]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Tensor> DetHead::backward(const std::vector<DetLevelPred>& d_preds) {
  if (d_preds.size() != levels_.size()) throw ShapeError("det head backward: level count mismatch");
  std::vector<Tensor> d_inputs;
  for (size_t li = 0; li < levels_.size(); ++li) {
    Level& lv = levels_[li];
    const DetLevelPred& dp = d_preds[li];
    if (decoupled_) {
      Tensor dc = lv.cls_pred->backward(dp.cls);
      for (size_t k = lv.cls_convs.size(); k-- > 0;)
        dc = lv.cls_convs[k].backward(lv.cls_norms[k].backward(lv.cls_acts[k].backward(dc)));
      Tensor dr = lv.box_pred->backward(dp.box);
      dr.add_(lv.obj_pred->backward(dp.obj));
      for (size_t k = lv.reg_convs.size(); k-- > 0;)
        dr = lv.reg_convs[k].backward(lv.reg_norms[k].backward(lv.reg_acts[k].backward(dr)));
      Tensor df = dc;
      df.add_(dr);
      d_inputs.push_back(lv.stem->backward(lv.stem_norm->backward(lv.stem_act->backward(df))));
    } else {
      Tensor d_all = concat_channels({&dp.cls, &dp.box, &dp.obj});
      Tensor dt = lv.pred->backward(d_all);
      for (size_t k = lv.trunk_convs.size(); k-- > 0;)
        dt = lv.trunk_convs[k].backward(lv.trunk_norms[k].backward(lv.trunk_acts[k].backward(dt)));
      d_inputs.push_back(std::move(dt));
    }
  }
  return d_inputs;
}

void DetHead::collect(std::vector<Param*>& out) {
  for (Level& lv : levels_) {
    if (decoupled_) {
      lv.stem->collect(out);
      lv.stem_norm->collect(out);
      for (size_t k = 0; k < lv.cls_convs.size(); ++k) {
        lv.cls_convs[k].collect(out);
        lv.cls_norms[k].collect(out);
      }
      for (size_t k = 0; k < lv.reg_convs.size(); ++k) {
        lv.reg_convs[k].collect(out);
        lv.reg_norms[k].collect(out);
      }
      lv.cls_pred->collect(out);
      lv.box_pred->collect(out);
      lv.obj_pred->collect(out);
    } else {
      for (size_t k = 0; k < lv.trunk_convs.size(); ++k) {
        lv.trunk_convs[k].collect(out);
        lv.trunk_norms[k].collect(out);
      }
      lv.pred->collect(out);
    }
  }
}

// ---------------------------------------------------------------------------
// Box transform, NMS, decode

Box decode_box(double tx, double ty, double tw, double th, int i, int j, int stride) {
  const double cx = (j + sigmoid(tx)) * stride;
  const double cy = (i + sigmoid(ty)) * stride;
  // exp clamp keeps runaway regressands finite during early training
  const double w = std::exp(std::min(tw, 8.0)) * stride;
  const double h = std::exp(std::min(th, 8.0)) * stride;
  return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::array<double, 4> encode_box(const Box& b, int i, int j, int stride) {
  auto logit = [](double p) {
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(p / (1.0 - p));
  };
  const double ox = b.cx() / stride - j;
  const double oy = b.cy() / stride - i;
  const double tw = std::log(std::max(b.width(), 1e-9) / stride);
  const double th = std::log(std::max(b.height(), 1e-9) / stride);
  return {logit(ox), logit(oy), tw, th};
}

std::vector<Detection> nms(std::vector<Detection> dets, double nms_iou) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id != d.class_id) continue;
      if (box_iou(k.box, d.box) >= nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<std::vector<Detection>> decode_detections(const std::vector<DetLevelPred>& pred,
                                                      double conf_threshold, double nms_iou) {
  if (conf_threshold <= 0 || conf_threshold >= 1) throw ConfigError("conf_threshold must be in (0,1)");
  if (nms_iou <= 0 || nms_iou >= 1) throw ConfigError("nms_iou must be in (0,1)");
  if (pred.empty()) return {};
  const int batch = pred[0].cls.dim(0);
  std::vector<std::vector<Detection>> out(batch);
  for (int n = 0; n < batch; ++n) {
    std::vector<Detection> cand;
    for (const DetLevelPred& lp : pred) {
      const int d = lp.cls.dim(1), h = lp.cls.dim(2), w = lp.cls.dim(3);
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const double obj = sigmoid(lp.obj.at(n, 0, i, j));
          if (obj * 1.0 < conf_threshold) continue;  // even a perfect class score cannot pass
          for (int c = 0; c < d; ++c) {
            const double score = obj * sigmoid(lp.cls.at(n, c, i, j));
            if (score < conf_threshold) continue;
            cand.push_back(Detection{
                c, score,
                decode_box(lp.box.at(n, 0, i, j), lp.box.at(n, 1, i, j), lp.box.at(n, 2, i, j),
                           lp.box.at(n, 3, i, j), i, j, lp.stride)});
          }
        }
      }
    }
    out[n] = nms(std::move(cand), nms_iou);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

namespace {
const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

Model::Model(const ModelConfig& cfg) : cfg_(cfg), backbone_(validated(cfg)), seg_(cfg), det_(cfg) {
  backbone_.collect(params_);
  seg_.collect(params_);
  det_.collect(params_);
  init_params(params_, cfg.seed);
}

ModelOutput Model::forward(const Tensor& image, Mode mode) {
  Pyramid pyr = backbone_.forward(image, mode);
  ModelOutput out;
  out.seg_logits = seg_.forward(pyr, mode);
  out.det = det_.forward(pyr, mode);
  return out;
}

void Model::backward(const Tensor& d_seg, const std::vector<DetLevelPred>& d_det) {
  std::array<Tensor, 4> d_pyr;
  auto accumulate = [&](int idx, Tensor&& t) {
    if (d_pyr[idx].empty())
      d_pyr[idx] = std::move(t);
    else
      d_pyr[idx].add_(t);
  };
  if (!d_seg.empty()) {
    std::array<Tensor, 3> ds = seg_.backward(d_seg);
    accumulate(1, std::move(ds[0]));
    accumulate(2, std::move(ds[1]));
    accumulate(3, std::move(ds[2]));
  }
  if (!d_det.empty()) {
    std::vector<Tensor> dd = det_.backward(d_det);
    for (size_t li = 0; li < dd.size(); ++li)
      accumulate(level_index(cfg_.det_levels[li]), std::move(dd[li]));
  }
  backbone_.backward(d_pyr);
}

void Model::zero_grad() {
  for (Param* p : params_) p->grad.zero();
}

}  // namespace mura
