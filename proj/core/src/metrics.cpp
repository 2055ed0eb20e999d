#include <algorithm>
#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "muranet/errors.hpp"
#include "muranet/metrics.hpp"

namespace mura {

double mask_iou(const MaskImage& pred, const MaskImage& gt, int class_id) {
  if (pred.h != gt.h || pred.w != gt.w) throw ShapeError("mask_iou: shape mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const bool p = pred.v[i] == class_id;
    const bool g = gt.v[i] == class_id;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> average_precision(std::vector<ScoredDet> dets,
                                        const std::vector<std::vector<Box>>& gt,
                                        double iou_threshold, bool eleven_point) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw ConfigError("average_precision: iou_threshold must lie in (0, 1)");
  int64_t n_gt = 0;
  for (const auto& g : gt) n_gt += static_cast<int64_t>(g.size());
  if (n_gt == 0 && dets.empty()) return std::nullopt;  // class absent everywhere
  if (n_gt == 0 || dets.empty()) return 0.0;           // pure misses / pure hallucination

  for (const ScoredDet& d : dets)
    if (d.image_id < 0 || d.image_id >= static_cast<int>(gt.size()))
      throw DataError("average_precision: detection image_id out of range");

  std::stable_sort(dets.begin(), dets.end(),
                   [](const ScoredDet& a, const ScoredDet& b) { return a.score > b.score; });

  std::vector<std::vector<char>> used(gt.size());
  for (size_t i = 0; i < gt.size(); ++i) used[i].assign(gt[i].size(), 0);

  const size_t n = dets.size();
  std::vector<char> tp(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const ScoredDet& d = dets[i];
    const std::vector<Box>& g = gt[static_cast<size_t>(d.image_id)];
    double best = 0.0;
    int best_j = -1;
    for (size_t j = 0; j < g.size(); ++j) {
      if (used[static_cast<size_t>(d.image_id)][j]) continue;
      const double iou = box_iou(d.box, g[j]);
      if (iou >= iou_threshold && iou > best) {  // strict > keeps the lowest index on ties
        best = iou;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0) {
      used[static_cast<size_t>(d.image_id)][static_cast<size_t>(best_j)] = 1;
      tp[i] = 1;
    }
  }

  std::vector<double> recall(n), precision(n);
  int64_t cum_tp = 0;
  for (size_t i = 0; i < n; ++i) {
    cum_tp += tp[i];
    recall[i] = static_cast<double>(cum_tp) / static_cast<double>(n_gt);
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
  }

  if (eleven_point) {
    double ap = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double r = k / 10.0;
      double p = 0.0;
      for (size_t i = 0; i < n; ++i)
        if (recall[i] >= r) p = std::max(p, precision[i]);
      ap += p / 11.0;
    }
    return ap;
  }

  // All-point interpolation: integrate the precision envelope over recall.
  std::vector<double> env(n);
  double run = 0.0;
  for (size_t i = n; i-- > 0;) {
    run = std::max(run, precision[i]);
    env[i] = run;
  }
  double ap = 0.0, prev_r = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_r) {
      ap += (recall[i] - prev_r) * env[i];
      prev_r = recall[i];
    }
  }
  return ap;
}

SamplePrediction ModelPredictor::predict(const Sample& s) {
  if (s.image.ndim() != 3) throw ShapeError("predict: image must be (C,H,W)");
  const int c = s.image.dim(0), h = s.image.dim(1), w = s.image.dim(2);
  Tensor batch({1, c, h, w});
  std::copy(s.image.data(), s.image.data() + s.image.numel(), batch.data());
  ModelOutput out = model_.forward(batch, Mode::kInfer);

  SamplePrediction p;
  const int num_classes = out.seg_logits.dim(1);
  p.mask = MaskImage(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int best = 0;
      double best_v = out.seg_logits.at(0, 0, y, x);
      for (int k = 1; k < num_classes; ++k) {
        const double v = out.seg_logits.at(0, k, y, x);
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      p.mask.at(y, x) = static_cast<uint8_t>(best);
    }
  p.dets = decode_detections(out.det, conf_, nms_)[0];
  return p;
}

SamplePrediction OraclePredictor::predict(const Sample& s) {
  SamplePrediction p;
  p.mask = s.mask;
  p.dets.reserve(s.boxes.size());
  for (const GtBox& b : s.boxes) p.dets.push_back(Detection{b.class_id, 1.0, b.box});
  return p;
}

MetricsReport evaluate(Predictor& predictor, const std::vector<Sample>& samples,
                       int num_seg_classes, int num_det_classes, bool eleven_point) {
  if (samples.empty()) throw DataError("evaluate: empty split");
  if (num_seg_classes < 1 || num_det_classes < 1)
    throw ConfigError("evaluate: class counts must be positive");

  std::vector<int64_t> inter(static_cast<size_t>(num_seg_classes), 0);
  std::vector<int64_t> uni(static_cast<size_t>(num_seg_classes), 0);
  std::vector<std::vector<ScoredDet>> dets(static_cast<size_t>(num_det_classes));
  std::vector<std::vector<std::vector<Box>>> gts(static_cast<size_t>(num_det_classes));
  for (auto& g : gts) g.resize(samples.size());

  MetricsReport r;
  r.images = static_cast<int64_t>(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const SamplePrediction p = predictor.predict(s);
    if (p.mask.h != s.mask.h || p.mask.w != s.mask.w)
      throw ShapeError("evaluate: prediction mask size mismatch for sample " + s.id);
    for (size_t k = 0; k < s.mask.v.size(); ++k) {
      const int pv = p.mask.v[k], gv = s.mask.v[k];
      if (pv >= num_seg_classes || gv >= num_seg_classes)
        throw DataError("evaluate: class map value out of range for sample " + s.id);
      if (pv == gv) {
        ++inter[static_cast<size_t>(pv)];
        ++uni[static_cast<size_t>(pv)];
      } else {
        ++uni[static_cast<size_t>(pv)];
        ++uni[static_cast<size_t>(gv)];
      }
    }
    for (const GtBox& b : s.boxes) {
      if (b.class_id >= num_det_classes)
        throw DataError("evaluate: gt class out of range for sample " + s.id);
      gts[static_cast<size_t>(b.class_id)][i].push_back(b.box);
      ++r.gt_boxes;
    }
    for (const Detection& d : p.dets) {
      if (d.class_id < 0 || d.class_id >= num_det_classes)
        throw DataError("evaluate: detection class out of range for sample " + s.id);
      dets[static_cast<size_t>(d.class_id)].push_back(
          ScoredDet{static_cast<int>(i), d.score, d.box});
      ++r.detections;
    }
  }

  r.class_iou.resize(static_cast<size_t>(num_seg_classes));
  for (int c = 0; c < num_seg_classes; ++c) {
    const size_t ci = static_cast<size_t>(c);
    r.class_iou[ci] = uni[ci] == 0 ? 1.0 : static_cast<double>(inter[ci]) / uni[ci];
    r.mean_iou += r.class_iou[ci] / num_seg_classes;
  }

  r.class_ap50.resize(static_cast<size_t>(num_det_classes));
  r.class_ap.resize(static_cast<size_t>(num_det_classes));
  int defined50 = 0, defined = 0;
  for (int c = 0; c < num_det_classes; ++c) {
    const size_t ci = static_cast<size_t>(c);
    r.class_ap50[ci] = average_precision(dets[ci], gts[ci], 0.5, eleven_point);
    if (r.class_ap50[ci]) {
      r.mean_ap50 += *r.class_ap50[ci];
      ++defined50;
    }
    // AP@[.5:.95] is by definition the plain mean of the ten thresholds.
    std::optional<double> acc;
    for (int k = 0; k < 10; ++k) {
      const double thr = (50 + 5 * k) / 100.0;
      if (const auto ap = average_precision(dets[ci], gts[ci], thr, eleven_point))
        acc = acc.value_or(0.0) + *ap / 10.0;
    }
    r.class_ap[ci] = acc;
    if (acc) {
      r.mean_ap += *acc;
      ++defined;
    }
  }
  r.mean_ap50 = defined50 > 0 ? r.mean_ap50 / defined50 : 0.0;
  r.mean_ap = defined > 0 ? r.mean_ap / defined : 0.0;
  return r;
}

namespace {

std::string seg_name(int c, int total) {
  if (total == 2) return c == 0 ? "background" : "wall";
  return "seg" + std::to_string(c);
}

std::string det_name(int c, int total) {
  if (total == 2) return c == 0 ? "door" : "window";
  return "det" + std::to_string(c);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

}  // namespace

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  for (size_t c = 0; c < r.class_iou.size(); ++c)
    j["seg"]["iou"][seg_name(static_cast<int>(c), static_cast<int>(r.class_iou.size()))] =
        r.class_iou[c];
  j["seg"]["mean_iou"] = r.mean_iou;
  for (size_t c = 0; c < r.class_ap50.size(); ++c) {
    const std::string name = det_name(static_cast<int>(c), static_cast<int>(r.class_ap50.size()));
    j["det"]["ap50"][name] = r.class_ap50[c] ? nlohmann::json(*r.class_ap50[c]) : nlohmann::json();
    j["det"]["ap"][name] = r.class_ap[c] ? nlohmann::json(*r.class_ap[c]) : nlohmann::json();
  }
  j["det"]["mean_ap50"] = r.mean_ap50;
  j["det"]["mean_ap"] = r.mean_ap;
  j["counts"] = {{"images", r.images}, {"gt_boxes", r.gt_boxes}, {"detections", r.detections}};
  return j;
}

std::string report_table(const MetricsReport& r) {
  std::ostringstream os;
  os << std::left;
  os << std::setw(14) << "class" << std::setw(12) << "IoU" << "\n";
  for (size_t c = 0; c < r.class_iou.size(); ++c)
    os << std::setw(14) << seg_name(static_cast<int>(c), static_cast<int>(r.class_iou.size()))
       << std::setw(12) << fmt(r.class_iou[c]) << "\n";
  os << std::setw(14) << "mean" << std::setw(12) << fmt(r.mean_iou) << "\n\n";

  os << std::setw(14) << "class" << std::setw(12) << "AP@0.5" << std::setw(12) << "AP@[.5:.95]"
     << "\n";
  for (size_t c = 0; c < r.class_ap50.size(); ++c)
    os << std::setw(14) << det_name(static_cast<int>(c), static_cast<int>(r.class_ap50.size()))
       << std::setw(12) << fmt(r.class_ap50[c]) << std::setw(12) << fmt(r.class_ap[c]) << "\n";
  os << std::setw(14) << "mean" << std::setw(12) << fmt(r.mean_ap50) << std::setw(12)
     << fmt(r.mean_ap) << "\n\n";

  os << "images " << r.images << "   gt boxes " << r.gt_boxes << "   detections " << r.detections
     << "\n";
  return os.str();
}

}  // namespace mura
