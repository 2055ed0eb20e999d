#pragma once

#include <vector>

#include "muranet/dataset.hpp"
#include "muranet/heads.hpp"

namespace mura {

// Figure-style overlay: wall mask alpha-blended in red, detections drawn as
// class-colored rectangles with "door 0.97"-style labels in a small bitmap
// font. Pure function; returns a new (3,H,W) image in [0,1].
Tensor render_overlay(const Tensor& image, const MaskImage& mask,
                      const std::vector<Detection>& dets);

}  // namespace mura
