#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "muranet/checkpoint.hpp"
#include "muranet/cli.hpp"
#include "muranet/errors.hpp"
#include "muranet/metrics.hpp"
#include "muranet/overlay.hpp"
#include "muranet/train.hpp"

namespace mura {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config, out, checkpoint;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_checkpoint) {
  cmd->add_option("--config", args.config, "JSON config file");
  cmd->add_option("--out", args.out, "Output directory");
  cmd->add_option("--override", args.overrides, "Dotted config override key=value (repeatable)");
  if (with_checkpoint) cmd->add_option("--checkpoint", args.checkpoint, "Model checkpoint file");
}

RunConfig resolve_config(const CommonArgs& args) {
  json doc = json::object();
  if (!args.config.empty()) {
    std::ifstream in(args.config);
    if (!in) throw ConfigError("cannot open config file: " + args.config);
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw ConfigError("invalid JSON in " + args.config + ": " + e.what());
    }
  }
  for (const std::string& ov : args.overrides) apply_override(doc, ov);
  return parse_run_config(doc);
}

void write_resolved_config(const fs::path& dir, const RunConfig& cfg) {
  std::ofstream out(dir / "config.json");
  if (!out) throw DataError("cannot write resolved config in " + dir.string());
  out << run_config_to_json(cfg).dump(2) << "\n";
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int run_synth(const CommonArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const std::string root = args.out.empty() ? cfg.data_root : args.out;
  const std::array<std::pair<const char*, int>, 3> splits{
      {{"train", cfg.synth.train_count}, {"val", cfg.synth.val_count},
       {"test", cfg.synth.test_count}}};
  int index = 0;
  for (const auto& [split, count] : splits) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k) {
      const Sample s = generate_floorplan(cfg.synth, index++);
      save_sample(root, split, s);
      ids.push_back(s.id);
    }
    write_manifest(root, split, ids);
  }
  fs::create_directories(root);
  write_resolved_config(root, cfg);
  std::printf("wrote %d samples to %s (train %d, val %d, test %d)\n", index, root.c_str(),
              cfg.synth.train_count, cfg.synth.val_count, cfg.synth.test_count);
  return 0;
}

class PrintObserver : public TrainObserver {
 public:
  void on_epoch(const EpochRecord& r) override {
    std::printf("epoch %4d  total %.4f  seg %.4f  bbox %.4f  cls %.4f  obj %.4f  lr %.3e",
                r.epoch, r.total, r.seg, r.det_bbox, r.det_cls, r.det_obj, r.lr);
    if (r.val_iou) std::printf("  val_iou %.4f  val_map50 %.4f", *r.val_iou, *r.val_map50);
    std::printf("\n");
    std::fflush(stdout);
  }
};

int run_train(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  if (!args.out.empty()) cfg.train.checkpoint_dir = args.out;
  PrintObserver observer;
  const TrainReport report = train_run(cfg, &observer);
  const fs::path dir(cfg.train.checkpoint_dir);
  write_resolved_config(dir, cfg);
  std::ofstream out(dir / "train_report.json");
  if (!out) throw DataError("cannot write train_report.json in " + dir.string());
  out << train_report_to_json(report).dump(2) << "\n";
  std::printf("finished %zu epochs in %.1f s; best %.4f; report in %s\n", report.epochs.size(),
              report.wall_seconds, report.best_metric, dir.string().c_str());
  return 0;
}

int run_eval(const CommonArgs& args, bool oracle) {
  RunConfig cfg = resolve_config(args);
  std::vector<Sample> samples = load_split(cfg.data_root, cfg.eval.split);

  std::unique_ptr<Model> model;
  std::unique_ptr<Predictor> predictor;
  int num_seg = cfg.model.num_seg_classes, num_det = cfg.model.num_det_classes;
  if (oracle) {
    predictor = std::make_unique<OraclePredictor>();
  } else {
    if (args.checkpoint.empty()) throw ConfigError("eval requires --checkpoint (or --oracle)");
    model = load_model(args.checkpoint);
    num_seg = model->config().num_seg_classes;
    num_det = model->config().num_det_classes;
    for (Sample& s : samples)
      if (s.image.dim(1) != model->config().input_h || s.image.dim(2) != model->config().input_w)
        s = resize_sample(s, model->config().input_h, model->config().input_w);
    predictor =
        std::make_unique<ModelPredictor>(*model, cfg.eval.conf_threshold, cfg.eval.nms_iou);
  }
  const MetricsReport report = evaluate(*predictor, samples, num_seg, num_det,
                                        cfg.eval.interpolation == "eleven_point");

  const fs::path dir(args.out.empty() ? "eval_out" : args.out);
  fs::create_directories(dir);
  write_resolved_config(dir, cfg);
  std::ofstream out(dir / "metrics.json");
  if (!out) throw DataError("cannot write metrics.json in " + dir.string());
  out << report_to_json(report).dump(2) << "\n";
  std::cout << report_table(report);
  return 0;
}

int run_predict(const CommonArgs& args, const std::vector<std::string>& images) {
  if (args.checkpoint.empty()) throw ConfigError("predict requires --checkpoint");
  if (images.empty()) throw ConfigError("predict requires at least one image path");
  RunConfig cfg = resolve_config(args);
  const std::unique_ptr<Model> model = load_model(args.checkpoint);
  cfg.model = model->config();
  ModelPredictor predictor(*model, cfg.eval.conf_threshold, cfg.eval.nms_iou);

  const fs::path dir(args.out.empty() ? "predict_out" : args.out);
  fs::create_directories(dir);
  write_resolved_config(dir, cfg);
  std::ofstream dets(dir / "detections.txt");
  if (!dets) throw DataError("cannot write detections.txt in " + dir.string());
  for (const std::string& path : images) {
    Sample s;
    s.id = stem_of(path);
    s.image = resize_image(read_png_rgb(path), cfg.model.input_h, cfg.model.input_w);
    s.mask = MaskImage(cfg.model.input_h, cfg.model.input_w);
    const SamplePrediction p = predictor.predict(s);
    write_png_gray((dir / (s.id + "_mask.png")).string(), p.mask);
    for (const Detection& d : p.dets) {
      char line[256];
      std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", s.id.c_str(),
                    d.class_id, d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2);
      dets << line;
    }
    std::printf("%s: %zu detections\n", s.id.c_str(), p.dets.size());
  }
  return 0;
}

// Stored predictions from `predict`: <stem>_mask.png plus detections.txt rows.
SamplePrediction load_stored_prediction(const fs::path& pred_dir, const std::string& id) {
  SamplePrediction p;
  p.mask = read_png_gray((pred_dir / (id + "_mask.png")).string());
  std::ifstream in(pred_dir / "detections.txt");
  if (!in) throw DataError("missing detections.txt in " + pred_dir.string());
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 7) throw DataError("malformed detections record: " + line);
    if (fields[0] != id) continue;
    Detection d;
    d.class_id = std::stoi(fields[1]);
    d.score = std::stod(fields[2]);
    d.box = Box{std::stod(fields[3]), std::stod(fields[4]), std::stod(fields[5]),
                std::stod(fields[6])};
    p.dets.push_back(d);
  }
  return p;
}

int run_visualize(const CommonArgs& args, const std::string& pred_dir,
                  const std::vector<std::string>& images) {
  if (images.empty()) throw ConfigError("visualize requires at least one image path");
  if (args.checkpoint.empty() == pred_dir.empty())
    throw ConfigError("visualize requires exactly one of --checkpoint or --pred");
  RunConfig cfg = resolve_config(args);

  std::unique_ptr<Model> model;
  std::unique_ptr<ModelPredictor> predictor;
  if (!args.checkpoint.empty()) {
    model = load_model(args.checkpoint);
    cfg.model = model->config();
    predictor =
        std::make_unique<ModelPredictor>(*model, cfg.eval.conf_threshold, cfg.eval.nms_iou);
  }

  const fs::path dir(args.out.empty() ? "viz_out" : args.out);
  fs::create_directories(dir);
  for (const std::string& path : images) {
    const std::string id = stem_of(path);
    Tensor image = read_png_rgb(path);
    SamplePrediction p;
    if (predictor) {
      Sample s;
      s.id = id;
      s.image = resize_image(image, cfg.model.input_h, cfg.model.input_w);
      s.mask = MaskImage(cfg.model.input_h, cfg.model.input_w);
      p = predictor->predict(s);
      image = std::move(s.image);
    } else {
      p = load_stored_prediction(pred_dir, id);
      if (image.dim(1) != p.mask.h || image.dim(2) != p.mask.w)
        image = resize_image(image, p.mask.h, p.mask.w);
    }
    const Tensor overlay = render_overlay(image, p.mask, p.dets);
    write_png_rgb((dir / (id + "_overlay.png")).string(), overlay);
    std::printf("%s_overlay.png: %zu boxes\n", id.c_str(), p.dets.size());
  }
  return 0;
}

std::string error_line(const std::string& message) {
  return json{{"error", message}}.dump();
}

}  // namespace

int run_command(int argc, const char* const* argv) {
  CLI::App app{"Multi-task floor-plan recognition: walls + doors/windows"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, eval_args, predict_args, viz_args;
  bool oracle = false;
  std::vector<std::string> predict_images, viz_images;
  std::string pred_dir;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic floor-plan dataset");
  add_common(synth, synth_args, false);
  CLI::App* train = app.add_subcommand("train", "Train the multi-task model");
  add_common(train, train_args, false);
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  add_common(eval_cmd, eval_args, true);
  eval_cmd->add_flag("--oracle", oracle, "Score ground truth against itself (pipeline check)");
  CLI::App* predict = app.add_subcommand("predict", "Run inference on image files");
  add_common(predict, predict_args, true);
  predict->add_option("images", predict_images, "Input image paths");
  CLI::App* viz = app.add_subcommand("visualize", "Render mask/detection overlays");
  add_common(viz, viz_args, true);
  viz->add_option("--pred", pred_dir, "Directory of stored predictions (from predict)");
  viz->add_option("images", viz_images, "Input image paths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_line(std::string("usage: ") + e.what()) << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (train->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args, oracle);
    if (predict->parsed()) return run_predict(predict_args, predict_images);
    if (viz->parsed()) return run_visualize(viz_args, pred_dir, viz_images);
    std::cerr << error_line("no subcommand given") << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << error_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << error_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace mura
