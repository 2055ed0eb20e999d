#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "muranet/config.hpp"
#include "muranet/layers.hpp"
#include "muranet/tensor.hpp"

namespace mura {

// Feature maps at strides 4, 8, 16, 32 (in that order).
struct Pyramid {
  std::array<Tensor, 4> maps;

  static constexpr std::array<int, 4> kStrides{4, 8, 16, 32};
  const Tensor& at_stride(int s) const;
  Tensor& at_stride(int s);
};

// MURA attention: b_0 = DW(x), b_k = DW(b_{k-1}); s = x + sum b_k;
// attn = PW(s); out = attn * x elementwise.
class MuraModule {
 public:
  MuraModule(const std::string& path, int channels, int num_convs);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

 private:
  std::vector<DwConv3x3> dws_;
  PwConv pw_;
  Tensor x_, attn_;
};

// Encoder block with two residual branches:
//   z  = y + MURA(Norm(y))           (identity when MURA is disabled)
//   y' = z + PW_expand -> DW3x3 -> GELU -> PW_project, applied to Norm(z)
class EncoderBlock {
 public:
  EncoderBlock(const std::string& path, int channels, const ModelConfig& cfg);

  Tensor forward(const Tensor& y, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

 private:
  std::optional<ChannelNorm> norm1_;
  std::optional<MuraModule> mura_;
  ChannelNorm norm2_;
  PwConv fc1_;
  DwConv3x3 dw_;
  Gelu act_;
  PwConv fc2_;
  bool mura_on_;
};

// Down set (1 or 2 stride-2 conv+BN pairs) followed by the stage's blocks.
class EncoderStage {
 public:
  EncoderStage(const std::string& path, int index, int in_ch, int out_ch, int depth,
               const ModelConfig& cfg);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

 private:
  std::vector<Conv2d> down_convs_;
  std::vector<BatchNorm2d> down_norms_;
  std::vector<EncoderBlock> blocks_;
};

// Identity + max-pools {5,9,13} concatenated, fused back by 1x1 conv.
class Spp {
 public:
  Spp(const std::string& path, int channels);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

 private:
  MaxPoolSame p5_, p9_, p13_;
  PwConv fuse_;
  int ch_;
};

// Four-stage pyramid encoder; SPP (when enabled) transforms the stride-32 map.
class Backbone {
 public:
  explicit Backbone(const ModelConfig& cfg);

  Pyramid forward(const Tensor& image, Mode mode);        // image (B,3,H,W), H,W % 32 == 0
  Tensor backward(const std::array<Tensor, 4>& d_pyramid);  // returns d_image
  void collect(std::vector<Param*>& out);

 private:
  std::vector<EncoderStage> stages_;
  std::optional<Spp> spp_;
};

}  // namespace mura
