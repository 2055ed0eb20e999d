#include "muranet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "muranet/errors.hpp"
#include "muranet/layers.hpp"

namespace mura {

ClassWeightTable seg_class_weights(const std::vector<int64_t>& pixel_counts) {
  if (pixel_counts.size() < 2) throw ConfigError("seg_class_weights needs at least two classes");
  int64_t total = 0;
  for (int64_t c : pixel_counts) {
    if (c < 0) throw DataError("negative pixel count");
    total += c;
  }
  if (total <= 0) throw DataError("seg_class_weights: total pixel count is zero");
  for (int64_t c : pixel_counts)
    if (c == total)
      throw DataError("degenerate class distribution: all pixels in one class");
  double denom = 0;
  for (int64_t c : pixel_counts) denom += static_cast<double>(total - c);
  ClassWeightTable t;
  t.pixel_counts = pixel_counts;
  t.total = total;
  t.weights.reserve(pixel_counts.size());
  for (int64_t c : pixel_counts) t.weights.push_back(static_cast<double>(total - c) / denom);
  return t;
}

double seg_weighted_ce(const Tensor& logits, const std::vector<MaskImage>& masks,
                       const ClassWeightTable& weights, Tensor* d_logits) {
  if (logits.ndim() != 4) throw ShapeError("seg_weighted_ce: logits must be rank 4");
  const int b = logits.dim(0), s = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (static_cast<int>(masks.size()) != b) throw ShapeError("seg_weighted_ce: batch size mismatch");
  if (static_cast<int>(weights.weights.size()) != s)
    throw ShapeError("seg_weighted_ce: weight table has wrong class count");
  constexpr double kLogClamp = 1e-12;
  const double npix = static_cast<double>(b) * h * w;
  if (d_logits) {
    *d_logits = Tensor(logits.shape());
  }
  double loss = 0;
  std::vector<double> p(s);
  for (int n = 0; n < b; ++n) {
    const MaskImage& m = masks[n];
    if (m.h != h || m.w != w) throw ShapeError("seg_weighted_ce: mask size mismatch");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int cls = m.at(y, x);
        if (cls < 0 || cls >= s)
          throw DataError("mask class out of range at pixel (" + std::to_string(x) + "," +
                          std::to_string(y) + "): " + std::to_string(cls));
        double mx = logits.at(n, 0, y, x);
        for (int c = 1; c < s; ++c) mx = std::max(mx, logits.at(n, c, y, x));
        double z = 0;
        for (int c = 0; c < s; ++c) {
          p[c] = std::exp(logits.at(n, c, y, x) - mx);
          z += p[c];
        }
        for (int c = 0; c < s; ++c) p[c] /= z;
        const double wgt = weights.weights[cls];
        loss += -wgt * std::log(std::max(p[cls], kLogClamp));
        if (d_logits) {
          if (p[cls] >= kLogClamp) {
            for (int c = 0; c < s; ++c)
              (*d_logits).at(n, c, y, x) = wgt * (p[c] - (c == cls ? 1.0 : 0.0)) / npix;
          }
          // clamped pixels contribute a constant, so their gradient stays 0
        }
      }
    }
  }
  return loss / npix;
}

// ---------------------------------------------------------------------------
// Target assignment

DetTargets assign_targets(const std::vector<GtBox>& boxes, const AssignConfig& cfg) {
  if (cfg.input_h <= 0 || cfg.input_w <= 0) throw ConfigError("assign_targets: bad input size");
  if (cfg.det_levels.empty()) throw ConfigError("assign_targets: no detection levels");
  DetTargets out;
  for (int stride : cfg.det_levels) {
    LevelTargets lt;
    lt.stride = stride;
    lt.h = cfg.input_h / stride;
    lt.w = cfg.input_w / stride;
    out.levels.push_back(lt);
  }
  // Cell index with exact-boundary ties resolved downward: a center landing on
  // a cell edge belongs to the lower cell.
  auto cell_of = [](double center, int stride, int dim) {
    int c = static_cast<int>(std::ceil(center / stride)) - 1;
    return std::clamp(c, 0, dim - 1);
  };
  struct Cand {
    double area;
    LevelTargets::Positive pos;
  };
  std::vector<std::map<int, Cand>> chosen(out.levels.size());
  for (const GtBox& g : boxes) {
    const Box& bb = g.box;
    if (bb.width() <= 0 || bb.height() <= 0) throw DataError("zero-area ground-truth box");
    if (bb.x1 < 0 || bb.y1 < 0 || bb.x2 > cfg.input_w || bb.y2 > cfg.input_h)
      throw DataError("ground-truth box outside image bounds");
    const double longest = std::max(bb.width(), bb.height());
    const int wanted = longest < cfg.route_small ? 8 : longest < cfg.route_medium ? 16 : 32;
    // If the routed level is not configured, fall back to the nearest one.
    size_t li = 0;
    int best_gap = std::abs(cfg.det_levels[0] - wanted);
    for (size_t k = 1; k < cfg.det_levels.size(); ++k) {
      const int gap = std::abs(cfg.det_levels[k] - wanted);
      if (gap < best_gap) {
        best_gap = gap;
        li = k;
      }
    }
    LevelTargets& lt = out.levels[li];
    const int j = cell_of(bb.cx(), lt.stride, lt.w);
    const int i = cell_of(bb.cy(), lt.stride, lt.h);
    LevelTargets::Positive pos;
    pos.cell = i * lt.w + j;
    pos.class_id = g.class_id;
    pos.gt = bb;
    pos.t = encode_box(bb, i, j, lt.stride);
    auto it = chosen[li].find(pos.cell);
    if (it == chosen[li].end()) {
      chosen[li].emplace(pos.cell, Cand{bb.area(), pos});
    } else if (bb.area() > it->second.area) {
      it->second = Cand{bb.area(), pos};
      ++out.dropped;
    } else {
      ++out.dropped;
    }
  }
  for (size_t li = 0; li < out.levels.size(); ++li)
    for (auto& [cell, cand] : chosen[li]) out.levels[li].positives.push_back(cand.pos);
  return out;
}

// ---------------------------------------------------------------------------
// Detection loss

namespace {

// IoU of a (pred) vs b (gt) plus d(iou)/d(a coords); 0 gradient when disjoint.
double iou_with_grad(const Box& a, const Box& b, std::array<double, 4>& da) {
  da = {0, 0, 0, 0};
  const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1, ih = iy2 - iy1;
  const double area_a = a.area(), area_b = b.area();
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = area_a + area_b - inter;
  const double iou = inter / uni;
  // d(iou)/dc = (dI*(U+I) - I*dA) / U^2 for each coordinate c of a
  const double u2 = uni * uni;
  const double di_ax1 = (a.x1 > b.x1) ? -ih : 0.0;
  const double di_ax2 = (a.x2 < b.x2) ? ih : 0.0;
  const double di_ay1 = (a.y1 > b.y1) ? -iw : 0.0;
  const double di_ay2 = (a.y2 < b.y2) ? iw : 0.0;
  const double da_ax1 = -a.height(), da_ax2 = a.height();
  const double da_ay1 = -a.width(), da_ay2 = a.width();
  da[0] = (di_ax1 * (uni + inter) - inter * da_ax1) / u2;
  da[1] = (di_ay1 * (uni + inter) - inter * da_ay1) / u2;
  da[2] = (di_ax2 * (uni + inter) - inter * da_ax2) / u2;
  da[3] = (di_ay2 * (uni + inter) - inter * da_ay2) / u2;
  return iou;
}

}  // namespace

LossBreakdown detection_loss(const std::vector<DetLevelPred>& pred,
                             const std::vector<DetTargets>& targets, bool iou_obj_target,
                             std::vector<DetLevelPred>* d_pred) {
  if (pred.empty()) throw ShapeError("detection_loss: no prediction levels");
  const int batch = pred[0].cls.dim(0);
  if (static_cast<int>(targets.size()) != batch)
    throw ShapeError("detection_loss: targets batch size mismatch");
  int64_t cells_per_image = 0;
  for (const DetLevelPred& lp : pred) cells_per_image += static_cast<int64_t>(lp.obj.dim(2)) * lp.obj.dim(3);
  const double n_all = static_cast<double>(cells_per_image) * batch;
  int64_t n_pos = 0;
  for (const DetTargets& t : targets) {
    if (t.levels.size() != pred.size()) throw ShapeError("detection_loss: level count mismatch");
    for (const LevelTargets& lt : t.levels) n_pos += static_cast<int64_t>(lt.positives.size());
  }
  if (d_pred) {
    d_pred->clear();
    for (const DetLevelPred& lp : pred) {
      DetLevelPred g;
      g.stride = lp.stride;
      g.cls = Tensor(lp.cls.shape());
      g.box = Tensor(lp.box.shape());
      g.obj = Tensor(lp.obj.shape());
      d_pred->push_back(std::move(g));
    }
  }

  double obj_sum = 0, bbox_sum = 0, cls_sum = 0;
  for (size_t li = 0; li < pred.size(); ++li) {
    const DetLevelPred& lp = pred[li];
    const int d = lp.cls.dim(1), h = lp.cls.dim(2), w = lp.cls.dim(3);
    for (int n = 0; n < batch; ++n) {
      const LevelTargets& lt = targets[n].levels[li];
      if (lt.stride != lp.stride || lt.h != h || lt.w != w)
        throw ShapeError("detection_loss: target grid does not match prediction");
      size_t pi = 0;  // positives sorted by cell
      for (int cell = 0; cell < h * w; ++cell) {
        const int i = cell / w, j = cell % w;
        const double z_obj = lp.obj.at(n, 0, i, j);
        const bool positive = pi < lt.positives.size() && lt.positives[pi].cell == cell;
        if (!positive) {
          double gz;
          obj_sum += bce_with_logit(z_obj, 0.0, &gz);
          if (d_pred) (*d_pred)[li].obj.at(n, 0, i, j) = gz / n_all;
          continue;
        }
        const LevelTargets::Positive& pos = lt.positives[pi++];
        const double tx = lp.box.at(n, 0, i, j), ty = lp.box.at(n, 1, i, j);
        const double tw = lp.box.at(n, 2, i, j), th = lp.box.at(n, 3, i, j);
        const Box pb = decode_box(tx, ty, tw, th, i, j, lp.stride);
        std::array<double, 4> da{};
        const double iou = iou_with_grad(pb, pos.gt, da);
        bbox_sum += 1.0 - iou;
        const double obj_tgt = iou_obj_target ? iou : 1.0;
        double gz, gt_grad;
        obj_sum += bce_with_logit(z_obj, obj_tgt, &gz, &gt_grad);
        double d_iou_total = 0;
        if (d_pred) {
          (*d_pred)[li].obj.at(n, 0, i, j) = gz / n_all;
          d_iou_total = -1.0 / static_cast<double>(n_pos);
          if (iou_obj_target) d_iou_total += gt_grad / n_all;  // target feedback, not detached
          // Chain d(iou)/d(box corners) -> d/d(t regressands).
          const double sx = sigmoid(tx), sy = sigmoid(ty);
          const double dcx = lp.stride * sx * (1.0 - sx);
          const double dcy = lp.stride * sy * (1.0 - sy);
          const double bw = pb.width(), bh = pb.height();
          const double dw_dtw = tw < 8.0 ? bw : 0.0;  // exp clamp region
          const double dh_dth = th < 8.0 ? bh : 0.0;
          (*d_pred)[li].box.at(n, 0, i, j) = d_iou_total * (da[0] + da[2]) * dcx;
          (*d_pred)[li].box.at(n, 1, i, j) = d_iou_total * (da[1] + da[3]) * dcy;
          (*d_pred)[li].box.at(n, 2, i, j) = d_iou_total * (da[2] - da[0]) * 0.5 * dw_dtw;
          (*d_pred)[li].box.at(n, 3, i, j) = d_iou_total * (da[3] - da[1]) * 0.5 * dh_dth;
        }
        for (int c = 0; c < d; ++c) {
          const double zc = lp.cls.at(n, c, i, j);
          const double tc = c == pos.class_id ? 1.0 : 0.0;
          double gc;
          cls_sum += bce_with_logit(zc, tc, &gc);
          if (d_pred) (*d_pred)[li].cls.at(n, c, i, j) = gc / static_cast<double>(n_pos);
        }
      }
      if (pi != lt.positives.size())
        throw DataError("detection_loss: positive cell outside the level grid");
    }
  }
  LossBreakdown lb;
  lb.det_obj = obj_sum / n_all;
  lb.det_bbox = n_pos > 0 ? bbox_sum / static_cast<double>(n_pos) : 0.0;
  lb.det_cls = n_pos > 0 ? cls_sum / static_cast<double>(n_pos) : 0.0;
  lb.total = lb.seg + lb.det_bbox + lb.det_cls + lb.det_obj;
  return lb;
}

double total_loss(double seg, const LossBreakdown& det) {
  const double t = seg + det.det_bbox + det.det_cls + det.det_obj;
  if (!std::isfinite(t))
    throw NumericError("non-finite loss: seg=" + std::to_string(seg) +
                       " bbox=" + std::to_string(det.det_bbox) + " cls=" + std::to_string(det.det_cls) +
                       " obj=" + std::to_string(det.det_obj));
  return t;
}

}  // namespace mura
