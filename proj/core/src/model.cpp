#include "muranet/model.hpp"

#include <cmath>

#include "muranet/errors.hpp"

namespace mura {

const Tensor& Pyramid::at_stride(int s) const {
  for (size_t i = 0; i < kStrides.size(); ++i)
    if (kStrides[i] == s) return maps[i];
  throw ShapeError("pyramid has no stride-" + std::to_string(s) + " level");
}

Tensor& Pyramid::at_stride(int s) {
  return const_cast<Tensor&>(static_cast<const Pyramid*>(this)->at_stride(s));
}

// ---------------------------------------------------------------------------
// MuraModule

MuraModule::MuraModule(const std::string& path, int channels, int num_convs)
    : pw_(path + "/pw", channels, channels, true) {
  dws_.reserve(num_convs);
  for (int k = 0; k < num_convs; ++k) dws_.emplace_back(path + "/dw" + std::to_string(k), channels);
}

Tensor MuraModule::forward(const Tensor& x, Mode mode) {
  Tensor s = x;
  Tensor b = x;
  for (auto& dw : dws_) {
    b = dw.forward(b, mode);
    s.add_(b);
  }
  Tensor attn = pw_.forward(s, mode);
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = attn[i] * x[i];
  if (mode == Mode::kTrain) {
    x_ = x;
    attn_ = std::move(attn);
  }
  return y;
}

Tensor MuraModule::backward(const Tensor& gy) {
  if (x_.empty()) throw Error("MuraModule: backward before forward");
  Tensor d_attn(gy.shape()), dx(gy.shape());
  for (int64_t i = 0; i < gy.numel(); ++i) {
    d_attn[i] = gy[i] * x_[i];
    dx[i] = gy[i] * attn_[i];  // gate path
  }
  Tensor d_s = pw_.backward(d_attn);
  // s = x + sum_k b_k with b_k = dw_k(b_{k-1}), b_{-1} = x.
  Tensor g = d_s;
  for (size_t k = dws_.size(); k-- > 1;) {
    g = dws_[k].backward(g);
    g.add_(d_s);
  }
  Tensor gx = dws_[0].backward(g);
  dx.add_(gx);
  dx.add_(d_s);
  return dx;
}

void MuraModule::collect(std::vector<Param*>& out) {
  for (auto& dw : dws_) dw.collect(out);
  pw_.collect(out);
}

// ---------------------------------------------------------------------------
// EncoderBlock

EncoderBlock::EncoderBlock(const std::string& path, int channels, const ModelConfig& cfg)
    : norm2_(path + "/norm2", channels),
      fc1_(path + "/mlp/fc1", channels, std::max(1, static_cast<int>(std::lround(channels * cfg.mlp_ratio))), true),
      dw_(path + "/mlp/dw", fc1_.out_channels()),
      fc2_(path + "/mlp/fc2", fc1_.out_channels(), channels, true),
      mura_on_(cfg.mura_enabled) {
  if (mura_on_) {
    norm1_.emplace(path + "/norm1", channels);
    mura_.emplace(path + "/mura", channels, cfg.mura_convs);
  }
}

Tensor EncoderBlock::forward(const Tensor& y, Mode mode) {
  Tensor z = y;
  if (mura_on_) z.add_(mura_->forward(norm1_->forward(y, mode), mode));
  Tensor h = fc1_.forward(norm2_.forward(z, mode), mode);
  h = dw_.forward(h, mode);
  h = act_.forward(h, mode);
  h = fc2_.forward(h, mode);
  h.add_(z);
  return h;
}

Tensor EncoderBlock::backward(const Tensor& gy) {
  Tensor d = fc2_.backward(gy);
  d = act_.backward(d);
  d = dw_.backward(d);
  d = fc1_.backward(d);
  Tensor dz = norm2_.backward(d);
  dz.add_(gy);  // residual
  if (!mura_on_) return dz;
  Tensor dy = norm1_->backward(mura_->backward(dz));
  dy.add_(dz);  // residual
  return dy;
}

void EncoderBlock::collect(std::vector<Param*>& out) {
  if (mura_on_) {
    norm1_->collect(out);
    mura_->collect(out);
  }
  norm2_.collect(out);
  fc1_.collect(out);
  dw_.collect(out);
  fc2_.collect(out);
}

// ---------------------------------------------------------------------------
// EncoderStage

EncoderStage::EncoderStage(const std::string& path, int index, int in_ch, int out_ch, int depth,
                           const ModelConfig& cfg) {
  if (index == 0) {
    const int mid = std::max(1, out_ch / 2);
    down_convs_.emplace_back(path + "/down0/conv", in_ch, mid, 3, 2, 1, false);
    down_norms_.emplace_back(path + "/down0/bn", mid);
    down_convs_.emplace_back(path + "/down1/conv", mid, out_ch, 3, 2, 1, false);
    down_norms_.emplace_back(path + "/down1/bn", out_ch);
  } else {
    down_convs_.emplace_back(path + "/down0/conv", in_ch, out_ch, 3, 2, 1, false);
    down_norms_.emplace_back(path + "/down0/bn", out_ch);
  }
  blocks_.reserve(depth);
  for (int b = 0; b < depth; ++b)
    blocks_.emplace_back(path + "/block" + std::to_string(b), out_ch, cfg);
}

Tensor EncoderStage::forward(const Tensor& x, Mode mode) {
  Tensor y = x;
  for (size_t i = 0; i < down_convs_.size(); ++i)
    y = down_norms_[i].forward(down_convs_[i].forward(y, mode), mode);
  for (auto& b : blocks_) y = b.forward(y, mode);
  return y;
}

Tensor EncoderStage::backward(const Tensor& gy) {
  Tensor d = gy;
  for (size_t i = blocks_.size(); i-- > 0;) d = blocks_[i].backward(d);
  for (size_t i = down_convs_.size(); i-- > 0;)
    d = down_convs_[i].backward(down_norms_[i].backward(d));
  return d;
}

void EncoderStage::collect(std::vector<Param*>& out) {
  for (size_t i = 0; i < down_convs_.size(); ++i) {
    down_convs_[i].collect(out);
    down_norms_[i].collect(out);
  }
  for (auto& b : blocks_) b.collect(out);
}

// ---------------------------------------------------------------------------
// Spp

Spp::Spp(const std::string& path, int channels)
    : p5_(5), p9_(9), p13_(13), fuse_(path + "/fuse", channels * 4, channels, true), ch_(channels) {}

Tensor Spp::forward(const Tensor& x, Mode mode) {
  if (x.dim(1) != ch_) throw ConfigError("SPP applied to wrong channel count");
  Tensor a = p5_.forward(x, mode);
  Tensor b = p9_.forward(x, mode);
  Tensor c = p13_.forward(x, mode);
  Tensor cat = concat_channels({&x, &a, &b, &c});
  return fuse_.forward(cat, mode);
}

Tensor Spp::backward(const Tensor& gy) {
  Tensor d_cat = fuse_.backward(gy);
  std::vector<Tensor> parts = split_channels(d_cat, {ch_, ch_, ch_, ch_});
  Tensor dx = std::move(parts[0]);
  dx.add_(p5_.backward(parts[1]));
  dx.add_(p9_.backward(parts[2]));
  dx.add_(p13_.backward(parts[3]));
  return dx;
}

void Spp::collect(std::vector<Param*>& out) { fuse_.collect(out); }

// ---------------------------------------------------------------------------
// Backbone

Backbone::Backbone(const ModelConfig& cfg) {
  int in_ch = 3;
  for (int i = 0; i < 4; ++i) {
    stages_.emplace_back("backbone/stage" + std::to_string(i + 1), i, in_ch, cfg.stage_channels[i],
                         cfg.stage_depths[i], cfg);
    in_ch = cfg.stage_channels[i];
  }
  if (cfg.spp_enabled) spp_.emplace("backbone/spp", cfg.stage_channels[3]);
}

Pyramid Backbone::forward(const Tensor& image, Mode mode) {
  if (image.ndim() != 4 || image.dim(1) != 3)
    throw ShapeError("backbone expects (B,3,H,W), got " + shape_str(image.shape()));
  if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0)
    throw ShapeError("input size not divisible by 32: " + shape_str(image.shape()));
  Pyramid pyr;
  Tensor y = image;
  for (int i = 0; i < 4; ++i) {
    y = stages_[i].forward(y, mode);
    pyr.maps[i] = y;
  }
  if (spp_) pyr.maps[3] = spp_->forward(pyr.maps[3], mode);
  return pyr;
}

Tensor Backbone::backward(const std::array<Tensor, 4>& d_pyramid) {
  if (d_pyramid[3].empty()) throw ShapeError("backbone backward needs a stride-32 gradient");
  Tensor d = d_pyramid[3];
  if (spp_) d = spp_->backward(d);
  for (int i = 3; i >= 0; --i) {
    d = stages_[i].backward(d);
    // Levels unused by any head (e.g. stride 4) may carry no gradient.
    if (i > 0 && !d_pyramid[i - 1].empty()) d.add_(d_pyramid[i - 1]);
  }
  return d;
}

void Backbone::collect(std::vector<Param*>& out) {
  for (auto& s : stages_) s.collect(out);
  if (spp_) spp_->collect(out);
}

}  // namespace mura
