#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "muranet/dataset.hpp"
#include "muranet/errors.hpp"

namespace mura {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path split_dir(const std::string& root, const std::string& split) {
  return fs::path(root) / split;
}

void check_split_name(const std::string& split) {
  if (split != "train" && split != "val" && split != "test")
    throw ConfigError("unknown split '" + split + "' (expected train, val, or test)");
}

}  // namespace

void save_sample(const std::string& root, const std::string& split, const Sample& s) {
  check_split_name(split);
  if (s.id.empty()) throw DataError("cannot save a sample without an id");
  const fs::path dir = split_dir(root, split);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  fs::create_directories(dir / "boxes");
  write_png_rgb((dir / "images" / (s.id + ".png")).string(), s.image);
  write_png_gray((dir / "masks" / (s.id + ".png")).string(), s.mask);

  std::ofstream out(dir / "boxes" / (s.id + ".jsonl"));
  if (!out) throw DataError("cannot write boxes for sample " + s.id);
  for (const GtBox& b : s.boxes) {
    json rec;
    rec["class"] = b.class_id;
    rec["bbox"] = {b.box.x1, b.box.y1, b.box.x2, b.box.y2};
    out << rec.dump() << "\n";
  }
}

Sample load_sample(const std::string& root, const std::string& split, const std::string& id) {
  check_split_name(split);
  const fs::path dir = split_dir(root, split);
  Sample s;
  s.id = id;
  try {
    s.image = read_png_rgb((dir / "images" / (id + ".png")).string());
    s.mask = read_png_gray((dir / "masks" / (id + ".png")).string());
  } catch (const DataError& e) {
    throw DataError("sample " + id + ": " + e.what());
  }
  if (s.mask.h != s.image.dim(1) || s.mask.w != s.image.dim(2))
    throw DataError("sample " + id + ": mask size does not match image");

  const fs::path box_path = dir / "boxes" / (id + ".jsonl");
  std::ifstream in(box_path);
  if (!in) throw DataError("sample " + id + ": missing boxes file " + box_path.string());
  const double w = s.image.dim(2), h = s.image.dim(1);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("sample " + id + ": corrupt boxes record on line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("class") || !rec.contains("bbox") ||
        !rec["bbox"].is_array() || rec["bbox"].size() != 4)
      throw DataError("sample " + id + ": malformed boxes record on line " +
                      std::to_string(line_no));
    GtBox b;
    b.class_id = rec["class"].get<int>();
    b.box = Box{rec["bbox"][0].get<double>(), rec["bbox"][1].get<double>(),
                rec["bbox"][2].get<double>(), rec["bbox"][3].get<double>()};
    if (b.class_id < 0)
      throw DataError("sample " + id + ": negative class id on line " + std::to_string(line_no));
    if (!(b.box.x2 > b.box.x1) || !(b.box.y2 > b.box.y1))
      throw DataError("sample " + id + ": box with non-positive area on line " +
                      std::to_string(line_no));
    if (b.box.x1 < 0 || b.box.y1 < 0 || b.box.x2 > w || b.box.y2 > h)
      throw DataError("sample " + id + ": box outside image bounds on line " +
                      std::to_string(line_no));
    s.boxes.push_back(b);
  }
  return s;
}

void write_manifest(const std::string& root, const std::string& split,
                    const std::vector<std::string>& ids) {
  check_split_name(split);
  const fs::path dir = split_dir(root, split);
  fs::create_directories(dir);
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw DataError("cannot write manifest for split " + split);
  for (const std::string& id : ids) out << id << "\n";
}

std::vector<std::string> enumerate_split(const std::string& root, const std::string& split) {
  check_split_name(split);
  const fs::path path = split_dir(root, split) / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw DataError("missing manifest " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<Sample> load_split(const std::string& root, const std::string& split) {
  const std::vector<std::string> ids = enumerate_split(root, split);
  std::vector<Sample> samples;
  samples.reserve(ids.size());
  for (const std::string& id : ids) samples.push_back(load_sample(root, split, id));
  return samples;
}

}  // namespace mura
