#pragma once

#include <string>
#include <vector>

#include "muranet/box.hpp"
#include "muranet/config.hpp"
#include "muranet/tensor.hpp"

namespace mura {

// One training/eval record. Image values are quantized to k/255 so the 8-bit
// on-disk form round-trips exactly.
struct Sample {
  std::string id;
  Tensor image;              // (3, H, W) in [0,1]
  MaskImage mask;            // (H, W), 0 background / 1 wall
  std::vector<GtBox> boxes;  // door=0, window=1

  bool operator==(const Sample& o) const;
};

// Deterministic synthetic floor plan: BSP room layout, thick walls, doors as
// wall gaps with quarter-circle arcs, windows as carved double-line segments.
// Pure function of (spec.seed, index).
Sample generate_floorplan(const SynthConfig& spec, int index);

// Area (shrink) / Catmull-Rom cubic (enlarge) per axis for the image,
// nearest-neighbor for the mask, proportional scaling for boxes. Target must
// be divisible by 32. Output image is re-quantized to k/255.
Sample resize_sample(const Sample& s, int target_h, int target_w);
Tensor resize_image(const Tensor& img, int target_h, int target_w);  // (C,H,W)
MaskImage resize_mask_nearest(const MaskImage& m, int target_h, int target_w);

// Dataset layout: root/{split}/{images,masks,boxes}/<id>.{png,png,jsonl} plus
// root/{split}/manifest.txt (one id per line).
void save_sample(const std::string& root, const std::string& split, const Sample& s);
Sample load_sample(const std::string& root, const std::string& split, const std::string& id);
std::vector<std::string> enumerate_split(const std::string& root, const std::string& split);
void write_manifest(const std::string& root, const std::string& split,
                    const std::vector<std::string>& ids);
std::vector<Sample> load_split(const std::string& root, const std::string& split);

// PNG I/O (8-bit, lossless).
void write_png_rgb(const std::string& path, const Tensor& img);  // (3,H,W) in [0,1]
Tensor read_png_rgb(const std::string& path);                    // always (3,H,W), k/255
void write_png_gray(const std::string& path, const MaskImage& m);  // raw label values
MaskImage read_png_gray(const std::string& path);

}  // namespace mura
