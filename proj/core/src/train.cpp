#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "muranet/checkpoint.hpp"
#include "muranet/dataset.hpp"
#include "muranet/errors.hpp"
#include "muranet/optimizer.hpp"
#include "muranet/schedule.hpp"
#include "muranet/train.hpp"

namespace mura {

namespace fs = std::filesystem;

namespace {

std::vector<Sample> load_resized(const std::string& root, const std::string& split, int h, int w) {
  std::vector<Sample> samples = load_split(root, split);
  for (Sample& s : samples)
    if (s.image.dim(1) != h || s.image.dim(2) != w) s = resize_sample(s, h, w);
  return samples;
}

Tensor stack_images(const std::vector<Sample>& samples, const std::vector<size_t>& order,
                    size_t first, size_t count) {
  const int c = samples[order[first]].image.dim(0);
  const int h = samples[order[first]].image.dim(1);
  const int w = samples[order[first]].image.dim(2);
  Tensor batch({static_cast<int>(count), c, h, w});
  for (size_t b = 0; b < count; ++b) {
    const Tensor& img = samples[order[first + b]].image;
    std::copy(img.data(), img.data() + img.numel(),
              batch.data() + static_cast<int64_t>(b) * img.numel());
  }
  return batch;
}

}  // namespace

TrainReport train_run(const RunConfig& cfg, TrainObserver* observer) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int in_h = cfg.model.input_h, in_w = cfg.model.input_w;

  std::vector<Sample> train_set = load_resized(cfg.data_root, "train", in_h, in_w);
  if (train_set.empty()) throw DataError("train split is empty");

  // Eq. 2 class weights, fixed once from the train split before epoch 1.
  std::vector<int64_t> pixel_counts(static_cast<size_t>(cfg.model.num_seg_classes), 0);
  for (const Sample& s : train_set)
    for (const uint8_t v : s.mask.v) {
      if (v >= cfg.model.num_seg_classes)
        throw DataError("mask class out of range in sample " + s.id);
      ++pixel_counts[v];
    }
  const ClassWeightTable weights = seg_class_weights(pixel_counts);

  AssignConfig assign_cfg;
  assign_cfg.input_h = in_h;
  assign_cfg.input_w = in_w;
  assign_cfg.det_levels.assign(cfg.model.det_levels.begin(), cfg.model.det_levels.end());
  assign_cfg.route_small = cfg.train.route_small;
  assign_cfg.route_medium = cfg.train.route_medium;

  TrainReport report;
  std::vector<DetTargets> targets;
  targets.reserve(train_set.size());
  for (const Sample& s : train_set) {
    targets.push_back(assign_targets(s.boxes, assign_cfg));
    report.dropped_targets += targets.back().dropped;
  }

  Model model(cfg.model);
  SgdOptimizer opt(model.params(), cfg.train.momentum, cfg.train.weight_decay);

  fs::create_directories(cfg.train.checkpoint_dir);
  std::ofstream metrics_log(fs::path(cfg.train.checkpoint_dir) / "metrics.csv");
  if (!metrics_log) throw DataError("cannot write metrics.csv in " + cfg.train.checkpoint_dir);
  metrics_log << "step,seg,det_bbox,det_cls,det_obj,total,lr\n";

  std::vector<Sample> val_set;  // loaded on first evaluation
  const bool iou_obj = cfg.train.obj_target == "iou";
  const size_t n = train_set.size();
  const size_t batch_size = static_cast<size_t>(cfg.train.batch_size);
  const size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  int64_t global_step = 0;
  double best_metric = -1.0;
  const std::string best_path = (fs::path(cfg.train.checkpoint_dir) / "best.ckpt").string();
  const std::string last_path = (fs::path(cfg.train.checkpoint_dir) / "last.ckpt").string();

  for (int epoch = 1; epoch <= cfg.train.total_epochs && !report.early_stopped; ++epoch) {
    Rng shuffle_rng(mix_seed(static_cast<uint64_t>(cfg.train.seed), static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(cfg.train, static_cast<double>(epoch - 1));

    for (size_t step = 0; step < steps_per_epoch; ++step, ++global_step) {
      const size_t first = step * batch_size;
      const size_t count = std::min(batch_size, n - first);
      const double lr =
          cfg.train.lr_per_step
              ? lr_at(cfg.train, (epoch - 1) + static_cast<double>(step) / steps_per_epoch)
              : rec.lr;

      Tensor batch = stack_images(train_set, order, first, count);
      std::vector<MaskImage> masks;
      std::vector<DetTargets> batch_targets;
      masks.reserve(count);
      batch_targets.reserve(count);
      for (size_t b = 0; b < count; ++b) {
        masks.push_back(train_set[order[first + b]].mask);
        batch_targets.push_back(targets[order[first + b]]);
      }

      ModelOutput out = model.forward(batch, Mode::kTrain);
      Tensor d_seg;
      const double seg = seg_weighted_ce(out.seg_logits, masks, weights, &d_seg);
      std::vector<DetLevelPred> d_det;
      const LossBreakdown det = detection_loss(out.det, batch_targets, iou_obj, &d_det);
      double total;
      try {
        total = total_loss(seg, det);
      } catch (const NumericError& e) {
        std::ostringstream ids;
        for (size_t b = 0; b < count; ++b)
          ids << (b ? ", " : "") << train_set[order[first + b]].id;
        throw NumericError(std::string(e.what()) + " at step " + std::to_string(global_step) +
                           " (epoch " + std::to_string(epoch) + ", batch: " + ids.str() + ")");
      }

      model.zero_grad();
      model.backward(d_seg, d_det);
      opt.step(lr);

      metrics_log << global_step << ',' << seg << ',' << det.det_bbox << ',' << det.det_cls << ','
                  << det.det_obj << ',' << total << ',' << lr << '\n';
      rec.seg += seg / steps_per_epoch;
      rec.det_bbox += det.det_bbox / steps_per_epoch;
      rec.det_cls += det.det_cls / steps_per_epoch;
      rec.det_obj += det.det_obj / steps_per_epoch;
      rec.total += total / steps_per_epoch;
    }

    if (epoch % cfg.train.eval_every == 0) {
      if (val_set.empty()) {
        val_set = load_resized(cfg.data_root, "val", in_h, in_w);
        if (val_set.empty()) throw DataError("val split is empty");
      }
      ModelPredictor predictor(model, cfg.eval.conf_threshold, cfg.eval.nms_iou);
      const MetricsReport m =
          evaluate(predictor, val_set, cfg.model.num_seg_classes, cfg.model.num_det_classes,
                   cfg.eval.interpolation == "eleven_point");
      rec.val_iou = cfg.model.num_seg_classes > 1 ? m.class_iou[1] : m.class_iou[0];
      rec.val_map50 = m.mean_ap50;
      const double metric = (*rec.val_iou + *rec.val_map50) / 2.0;
      if (metric > best_metric) {
        best_metric = metric;
        save_checkpoint(best_path, model);
        report.best_checkpoint = best_path;
        report.best_metric = metric;
      }
      const bool iou_goal = cfg.train.stop_iou <= 0 || *rec.val_iou >= cfg.train.stop_iou;
      const bool map_goal = cfg.train.stop_map <= 0 || *rec.val_map50 >= cfg.train.stop_map;
      if ((cfg.train.stop_iou > 0 || cfg.train.stop_map > 0) && iou_goal && map_goal)
        report.early_stopped = true;
    }

    report.epochs.push_back(rec);
    if (observer) observer->on_epoch(rec);
  }

  save_checkpoint(last_path, model);
  report.last_checkpoint = last_path;

  // Convergence detection over the evaluated epochs, reported in epoch numbers.
  std::vector<double> iou_series, map_series;
  std::vector<int> eval_epochs;
  for (const EpochRecord& r : report.epochs)
    if (r.val_iou) {
      iou_series.push_back(*r.val_iou);
      map_series.push_back(*r.val_map50);
      eval_epochs.push_back(r.epoch);
    }
  if (!iou_series.empty() && iou_series.back() > 0)
    if (const auto e = convergence_epoch(iou_series))
      report.convergence_epoch_iou = eval_epochs[static_cast<size_t>(*e - 1)];
  if (!map_series.empty() && map_series.back() > 0)
    if (const auto e = convergence_epoch(map_series))
      report.convergence_epoch_map = eval_epochs[static_cast<size_t>(*e - 1)];

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

nlohmann::json train_report_to_json(const TrainReport& report) {
  nlohmann::json j;
  j["epochs"] = nlohmann::json::array();
  for (const EpochRecord& r : report.epochs) {
    nlohmann::json e;
    e["epoch"] = r.epoch;
    e["seg"] = r.seg;
    e["det_bbox"] = r.det_bbox;
    e["det_cls"] = r.det_cls;
    e["det_obj"] = r.det_obj;
    e["total"] = r.total;
    e["lr"] = r.lr;
    e["val_iou"] = r.val_iou ? nlohmann::json(*r.val_iou) : nlohmann::json();
    e["val_map50"] = r.val_map50 ? nlohmann::json(*r.val_map50) : nlohmann::json();
    j["epochs"].push_back(std::move(e));
  }
  j["convergence_epoch_iou"] =
      report.convergence_epoch_iou ? nlohmann::json(*report.convergence_epoch_iou) : nlohmann::json();
  j["convergence_epoch_map"] =
      report.convergence_epoch_map ? nlohmann::json(*report.convergence_epoch_map) : nlohmann::json();
  j["wall_seconds"] = report.wall_seconds;
  j["best_checkpoint"] = report.best_checkpoint;
  j["last_checkpoint"] = report.last_checkpoint;
  j["best_metric"] = report.best_metric;
  j["dropped_targets"] = report.dropped_targets;
  j["early_stopped"] = report.early_stopped;
  return j;
}

}  // namespace mura
