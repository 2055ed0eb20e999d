#include "muranet/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "muranet/errors.hpp"

namespace mura {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Upper bound on im2col workspace columns, keeps peak memory flat for large inputs.
constexpr int kChunkCols = 4096;

}  // namespace

void gemm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  CMapMat ma(a, m, k), mb(b, k, n);
  MapMat mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma * mb;
  else
    mc.noalias() = ma * mb;
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  CMapMat ma(a, k, m), mb(b, k, n);
  MapMat mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma.transpose() * mb;
  else
    mc.noalias() = ma.transpose() * mb;
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  CMapMat ma(a, m, k), mb(b, n, k);
  MapMat mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma * mb.transpose();
  else
    mc.noalias() = ma * mb.transpose();
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string path, int in_ch, int out_ch, int ksize, int stride, int pad, bool bias)
    : weight(path + "/w", {out_ch, in_ch * ksize * ksize}),
      in_ch_(in_ch),
      out_ch_(out_ch),
      k_(ksize),
      stride_(stride),
      pad_(pad),
      has_bias_(bias) {
  if (bias) this->bias = Param(path + "/b", {out_ch}, true, false);
}

namespace {

// Fills `col` (ckk x cols) with patches for output positions [p0, p0+cols) of
// image `n`. Positions are row-major over (oh, ow).
void im2col_chunk(const Tensor& x, int n, int k, int stride, int pad, int out_w, int p0, int cols,
                  double* col) {
  const int cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ckk = cin * k * k;
  for (int c = 0; c < cin; ++c) {
    const double* plane = x.data() + (static_cast<int64_t>(n) * cin + c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col + (static_cast<int64_t>(c) * k * k + ky * k + kx) * cols;
        for (int p = 0; p < cols; ++p) {
          const int oh = (p0 + p) / out_w, ow = (p0 + p) % out_w;
          const int iy = oh * stride - pad + ky, ix = ow * stride - pad + kx;
          row[p] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
        }
      }
    }
  }
  (void)ckk;
}

// Adjoint of im2col_chunk: scatter-adds `col` back into dx.
void col2im_chunk(Tensor& dx, int n, int k, int stride, int pad, int out_w, int p0, int cols,
                  const double* col) {
  const int cin = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  for (int c = 0; c < cin; ++c) {
    double* plane = dx.data() + (static_cast<int64_t>(n) * cin + c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col + (static_cast<int64_t>(c) * k * k + ky * k + kx) * cols;
        for (int p = 0; p < cols; ++p) {
          const int oh = (p0 + p) / out_w, ow = (p0 + p) % out_w;
          const int iy = oh * stride - pad + ky, ix = ow * stride - pad + kx;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += row[p];
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != in_ch_)
    throw ShapeError("Conv2d " + weight.path + ": bad input " + shape_str(x.shape()));
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = (h + 2 * pad_ - k_) / stride_ + 1;
  const int ow = (w + 2 * pad_ - k_) / stride_ + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("Conv2d " + weight.path + ": output collapses");
  Tensor y({n, out_ch_, oh, ow});
  const int ckk = in_ch_ * k_ * k_;
  const int total = oh * ow;
  std::vector<double> col(static_cast<size_t>(ckk) * std::min(total, kChunkCols));
  for (int img = 0; img < n; ++img) {
    for (int p0 = 0; p0 < total; p0 += kChunkCols) {
      const int cols = std::min(kChunkCols, total - p0);
      im2col_chunk(x, img, k_, stride_, pad_, ow, p0, cols, col.data());
      // out chunk is strided inside y; compute into a dense block then copy.
      std::vector<double> out_blk(static_cast<size_t>(out_ch_) * cols);
      gemm(weight.value.data(), col.data(), out_blk.data(), out_ch_, ckk, cols);
      for (int oc = 0; oc < out_ch_; ++oc) {
        double* dst = y.data() + ((static_cast<int64_t>(img) * out_ch_ + oc) * total + p0);
        const double* src = out_blk.data() + static_cast<int64_t>(oc) * cols;
        const double b = has_bias_ ? bias.value[oc] : 0.0;
        for (int p = 0; p < cols; ++p) dst[p] = src[p] + b;
      }
    }
  }
  if (mode == Mode::kTrain) x_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  if (x_.empty()) throw Error("Conv2d " + weight.path + ": backward before forward");
  const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const int oh = gy.dim(2), ow = gy.dim(3);
  const int ckk = in_ch_ * k_ * k_;
  const int total = oh * ow;
  Tensor dx(x_.shape());
  const int chunk = std::min(total, kChunkCols);
  std::vector<double> col(static_cast<size_t>(ckk) * chunk);
  std::vector<double> gy_blk(static_cast<size_t>(out_ch_) * chunk);
  std::vector<double> dcol(static_cast<size_t>(ckk) * chunk);
  for (int img = 0; img < n; ++img) {
    for (int p0 = 0; p0 < total; p0 += kChunkCols) {
      const int cols = std::min(kChunkCols, total - p0);
      im2col_chunk(x_, img, k_, stride_, pad_, ow, p0, cols, col.data());
      for (int oc = 0; oc < out_ch_; ++oc) {
        const double* src = gy.data() + ((static_cast<int64_t>(img) * out_ch_ + oc) * total + p0);
        std::copy(src, src + cols, gy_blk.data() + static_cast<int64_t>(oc) * cols);
      }
      // dW += gy * col^T ; dcol = W^T * gy ; then scatter dcol.
      gemm_nt(gy_blk.data(), col.data(), weight.grad.data(), out_ch_, cols, ckk, true);
      gemm_tn(weight.value.data(), gy_blk.data(), dcol.data(), ckk, out_ch_, cols);
      col2im_chunk(dx, img, k_, stride_, pad_, ow, p0, cols, dcol.data());
      if (has_bias_) {
        for (int oc = 0; oc < out_ch_; ++oc) {
          const double* src = gy_blk.data() + static_cast<int64_t>(oc) * cols;
          double s = 0;
          for (int p = 0; p < cols; ++p) s += src[p];
          bias.grad[oc] += s;
        }
      }
    }
  }
  (void)h;
  (void)w;
  return dx;
}

void Conv2d::collect(std::vector<Param*>& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// PwConv

PwConv::PwConv(std::string path, int in_ch, int out_ch, bool bias)
    : weight(path + "/w", {out_ch, in_ch}), in_ch_(in_ch), out_ch_(out_ch), has_bias_(bias) {
  if (bias) this->bias = Param(path + "/b", {out_ch}, true, false);
}

Tensor PwConv::forward(const Tensor& x, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != in_ch_)
    throw ShapeError("PwConv " + weight.path + ": bad input " + shape_str(x.shape()));
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int hw = h * w;
  Tensor y({n, out_ch_, h, w});
  for (int img = 0; img < n; ++img) {
    const double* xi = x.data() + static_cast<int64_t>(img) * in_ch_ * hw;
    double* yi = y.data() + static_cast<int64_t>(img) * out_ch_ * hw;
    gemm(weight.value.data(), xi, yi, out_ch_, in_ch_, hw);
    if (has_bias_) {
      for (int oc = 0; oc < out_ch_; ++oc) {
        const double b = bias.value[oc];
        double* row = yi + static_cast<int64_t>(oc) * hw;
        for (int p = 0; p < hw; ++p) row[p] += b;
      }
    }
  }
  if (mode == Mode::kTrain) x_ = x;
  return y;
}

Tensor PwConv::backward(const Tensor& gy) {
  if (x_.empty()) throw Error("PwConv " + weight.path + ": backward before forward");
  const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const int hw = h * w;
  Tensor dx(x_.shape());
  for (int img = 0; img < n; ++img) {
    const double* xi = x_.data() + static_cast<int64_t>(img) * in_ch_ * hw;
    const double* gi = gy.data() + static_cast<int64_t>(img) * out_ch_ * hw;
    double* di = dx.data() + static_cast<int64_t>(img) * in_ch_ * hw;
    gemm_nt(gi, xi, weight.grad.data(), out_ch_, hw, in_ch_, true);
    gemm_tn(weight.value.data(), gi, di, in_ch_, out_ch_, hw);
    if (has_bias_) {
      for (int oc = 0; oc < out_ch_; ++oc) {
        const double* row = gi + static_cast<int64_t>(oc) * hw;
        double s = 0;
        for (int p = 0; p < hw; ++p) s += row[p];
        bias.grad[oc] += s;
      }
    }
  }
  return dx;
}

void PwConv::collect(std::vector<Param*>& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// DwConv3x3

DwConv3x3::DwConv3x3(std::string path, int channels)
    : weight(path + "/w", {channels, 9}), bias(path + "/b", {channels}, true, false), ch_(channels) {}

Tensor DwConv3x3::forward(const Tensor& x, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != ch_)
    throw ShapeError("DwConv3x3 " + weight.path + ": bad input " + shape_str(x.shape()));
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  Tensor y(x.shape());
  for (int img = 0; img < n; ++img) {
    for (int c = 0; c < ch_; ++c) {
      const double* xp = x.data() + (static_cast<int64_t>(img) * ch_ + c) * h * w;
      double* yp = y.data() + (static_cast<int64_t>(img) * ch_ + c) * h * w;
      const double* wk = weight.value.data() + c * 9;
      const double b = bias.value[c];
      for (int yx = 0; yx < h; ++yx) {
        for (int xx = 0; xx < w; ++xx) {
          double acc = b;
          for (int dy = -1; dy <= 1; ++dy) {
            const int iy = yx + dy;
            if (iy < 0 || iy >= h) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const int ix = xx + dx;
              if (ix < 0 || ix >= w) continue;
              acc += wk[(dy + 1) * 3 + (dx + 1)] * xp[iy * w + ix];
            }
          }
          yp[yx * w + xx] = acc;
        }
      }
    }
  }
  if (mode == Mode::kTrain) x_ = x;
  return y;
}

Tensor DwConv3x3::backward(const Tensor& gy) {
  if (x_.empty()) throw Error("DwConv3x3 " + weight.path + ": backward before forward");
  const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  Tensor dx(x_.shape());
  for (int img = 0; img < n; ++img) {
    for (int c = 0; c < ch_; ++c) {
      const double* xp = x_.data() + (static_cast<int64_t>(img) * ch_ + c) * h * w;
      const double* gp = gy.data() + (static_cast<int64_t>(img) * ch_ + c) * h * w;
      double* dp = dx.data() + (static_cast<int64_t>(img) * ch_ + c) * h * w;
      const double* wk = weight.value.data() + c * 9;
      double* dwk = weight.grad.data() + c * 9;
      double dbias = 0;
      for (int yx = 0; yx < h; ++yx) {
        for (int xx = 0; xx < w; ++xx) {
          const double g = gp[yx * w + xx];
          dbias += g;
          for (int dy = -1; dy <= 1; ++dy) {
            const int iy = yx + dy;
            if (iy < 0 || iy >= h) continue;
            for (int dx2 = -1; dx2 <= 1; ++dx2) {
              const int ix = xx + dx2;
              if (ix < 0 || ix >= w) continue;
              const int ki = (dy + 1) * 3 + (dx2 + 1);
              dwk[ki] += g * xp[iy * w + ix];
              dp[iy * w + ix] += g * wk[ki];
            }
          }
        }
      }
      bias.grad[c] += dbias;
    }
  }
  return dx;
}

void DwConv3x3::collect(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string path, int channels, double momentum, double eps)
    : gamma(path + "/gamma", {channels}, true, false),
      beta(path + "/beta", {channels}, true, false),
      running_mean(path + "/running_mean", {channels}, false, false),
      running_var(path + "/running_var", {channels}, false, false),
      ch_(channels),
      momentum_(momentum),
      eps_(eps) {
  running_var.value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != ch_)
    throw ShapeError("BatchNorm2d " + gamma.path + ": bad input " + shape_str(x.shape()));
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int64_t m = static_cast<int64_t>(n) * h * w;
  Tensor y(x.shape());
  if (mode == Mode::kTrain) {
    xhat_ = Tensor(x.shape());
    invstd_.assign(ch_, 0.0);
    for (int c = 0; c < ch_; ++c) {
      double mean = 0;
      for (int img = 0; img < n; ++img) {
        const double* xp = x.data() + (static_cast<int64_t>(img) * ch_ + c) * h * w;
        for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) mean += xp[p];
      }
      mean /= static_cast<double>(m);
      double var = 0;
      for (int img = 0; img < n; ++img) {
        const double* xp = x.data() + (static_cast<int64_t>(img) * ch_ + c) * h * w;
        for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
          const double d = xp[p] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(m);
      const double istd = 1.0 / std::sqrt(var + eps_);
      invstd_[c] = istd;
      const double g = gamma.value[c], b = beta.value[c];
      for (int img = 0; img < n; ++img) {
        const int64_t off = (static_cast<int64_t>(img) * ch_ + c) * h * w;
        const double* xp = x.data() + off;
        double* xh = xhat_.data() + off;
        double* yp = y.data() + off;
        for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
          xh[p] = (xp[p] - mean) * istd;
          yp[p] = g * xh[p] + b;
        }
      }
      const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean.value[c] += momentum_ * (mean - running_mean.value[c]);
      running_var.value[c] += momentum_ * (unbiased - running_var.value[c]);
    }
  } else {
    for (int c = 0; c < ch_; ++c) {
      const double istd = 1.0 / std::sqrt(running_var.value[c] + eps_);
      const double mean = running_mean.value[c];
      const double g = gamma.value[c], b = beta.value[c];
      for (int img = 0; img < n; ++img) {
        const int64_t off = (static_cast<int64_t>(img) * ch_ + c) * h * w;
        const double* xp = x.data() + off;
        double* yp = y.data() + off;
        for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) yp[p] = g * (xp[p] - mean) * istd + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  if (xhat_.empty()) throw Error("BatchNorm2d " + gamma.path + ": backward before train forward");
  const int n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
  const int64_t m = static_cast<int64_t>(n) * h * w;
  Tensor dx(gy.shape());
  for (int c = 0; c < ch_; ++c) {
    double sum_g = 0, sum_gx = 0;
    for (int img = 0; img < n; ++img) {
      const int64_t off = (static_cast<int64_t>(img) * ch_ + c) * h * w;
      const double* gp = gy.data() + off;
      const double* xh = xhat_.data() + off;
      for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p) {
        sum_g += gp[p];
        sum_gx += gp[p] * xh[p];
      }
    }
    gamma.grad[c] += sum_gx;
    beta.grad[c] += sum_g;
    const double scale = gamma.value[c] * invstd_[c] / static_cast<double>(m);
    for (int img = 0; img < n; ++img) {
      const int64_t off = (static_cast<int64_t>(img) * ch_ + c) * h * w;
      const double* gp = gy.data() + off;
      const double* xh = xhat_.data() + off;
      double* dp = dx.data() + off;
      for (int64_t p = 0; p < static_cast<int64_t>(h) * w; ++p)
        dp[p] = scale * (static_cast<double>(m) * gp[p] - sum_g - xh[p] * sum_gx);
    }
  }
  return dx;
}

void BatchNorm2d::collect(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// ChannelNorm

ChannelNorm::ChannelNorm(std::string path, int channels, double eps)
    : gamma(path + "/gamma", {channels}, true, false),
      beta(path + "/beta", {channels}, true, false),
      ch_(channels),
      eps_(eps) {}

Tensor ChannelNorm::forward(const Tensor& x, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != ch_)
    throw ShapeError("ChannelNorm " + gamma.path + ": bad input " + shape_str(x.shape()));
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int hw = h * w;
  Tensor y(x.shape());
  Tensor xh(x.shape());
  std::vector<double> istds(static_cast<size_t>(n) * hw);
  for (int img = 0; img < n; ++img) {
    const double* xi = x.data() + static_cast<int64_t>(img) * ch_ * hw;
    double* xhi = xh.data() + static_cast<int64_t>(img) * ch_ * hw;
    double* yi = y.data() + static_cast<int64_t>(img) * ch_ * hw;
    for (int p = 0; p < hw; ++p) {
      double mean = 0;
      for (int c = 0; c < ch_; ++c) mean += xi[static_cast<int64_t>(c) * hw + p];
      mean /= ch_;
      double var = 0;
      for (int c = 0; c < ch_; ++c) {
        const double d = xi[static_cast<int64_t>(c) * hw + p] - mean;
        var += d * d;
      }
      var /= ch_;
      const double istd = 1.0 / std::sqrt(var + eps_);
      istds[static_cast<size_t>(img) * hw + p] = istd;
      for (int c = 0; c < ch_; ++c) {
        const double v = (xi[static_cast<int64_t>(c) * hw + p] - mean) * istd;
        xhi[static_cast<int64_t>(c) * hw + p] = v;
        yi[static_cast<int64_t>(c) * hw + p] = gamma.value[c] * v + beta.value[c];
      }
    }
  }
  if (mode == Mode::kTrain) {
    xhat_ = std::move(xh);
    invstd_ = std::move(istds);
  }
  return y;
}

Tensor ChannelNorm::backward(const Tensor& gy) {
  if (xhat_.empty()) throw Error("ChannelNorm " + gamma.path + ": backward before train forward");
  const int n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
  const int hw = h * w;
  Tensor dx(gy.shape());
  for (int img = 0; img < n; ++img) {
    const double* gi = gy.data() + static_cast<int64_t>(img) * ch_ * hw;
    const double* xhi = xhat_.data() + static_cast<int64_t>(img) * ch_ * hw;
    double* di = dx.data() + static_cast<int64_t>(img) * ch_ * hw;
    for (int p = 0; p < hw; ++p) {
      double sum_g = 0, sum_gx = 0;
      for (int c = 0; c < ch_; ++c) {
        const double g = gi[static_cast<int64_t>(c) * hw + p] * gamma.value[c];
        const double xv = xhi[static_cast<int64_t>(c) * hw + p];
        sum_g += g;
        sum_gx += g * xv;
        gamma.grad[c] += gi[static_cast<int64_t>(c) * hw + p] * xv;
        beta.grad[c] += gi[static_cast<int64_t>(c) * hw + p];
      }
      const double istd = invstd_[static_cast<size_t>(img) * hw + p];
      for (int c = 0; c < ch_; ++c) {
        const double g = gi[static_cast<int64_t>(c) * hw + p] * gamma.value[c];
        const double xv = xhi[static_cast<int64_t>(c) * hw + p];
        di[static_cast<int64_t>(c) * hw + p] = istd / ch_ * (ch_ * g - sum_g - xv * sum_gx);
      }
    }
  }
  return dx;
}

void ChannelNorm::collect(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------------------
// Gelu

Tensor Gelu::forward(const Tensor& x, Mode mode) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * M_SQRT1_2));
  if (mode == Mode::kTrain) x_ = x;
  return y;
}

Tensor Gelu::backward(const Tensor& gy) {
  if (x_.empty()) throw Error("Gelu: backward before forward");
  Tensor dx(gy.shape());
  constexpr double inv_sqrt_2pi = 0.3989422804014326779;
  for (int64_t i = 0; i < gy.numel(); ++i) {
    const double x = x_[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
    dx[i] = gy[i] * (cdf + x * pdf);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPoolSame

Tensor MaxPoolSame::forward(const Tensor& x, Mode mode) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int r = k_ / 2;
  Tensor y(x.shape());
  std::vector<int64_t> arg(static_cast<size_t>(x.numel()));
  for (int img = 0; img < n; ++img) {
    for (int ch = 0; ch < c; ++ch) {
      const int64_t off = (static_cast<int64_t>(img) * c + ch) * h * w;
      const double* xp = x.data() + off;
      double* yp = y.data() + off;
      for (int yy = 0; yy < h; ++yy) {
        const int y0 = std::max(0, yy - r), y1 = std::min(h - 1, yy + r);
        for (int xx = 0; xx < w; ++xx) {
          const int x0 = std::max(0, xx - r), x1 = std::min(w - 1, xx + r);
          double best = -std::numeric_limits<double>::infinity();
          int64_t bi = -1;
          for (int iy = y0; iy <= y1; ++iy)
            for (int ix = x0; ix <= x1; ++ix)
              if (xp[iy * w + ix] > best) {
                best = xp[iy * w + ix];
                bi = iy * w + ix;
              }
          yp[yy * w + xx] = best;
          arg[off + yy * w + xx] = off + bi;
        }
      }
    }
  }
  if (mode == Mode::kTrain) {
    in_shape_ = x.shape();
    argmax_ = std::move(arg);
  }
  return y;
}

Tensor MaxPoolSame::backward(const Tensor& gy) {
  if (argmax_.empty()) throw Error("MaxPoolSame: backward before forward");
  Tensor dx(in_shape_);
  for (int64_t i = 0; i < gy.numel(); ++i) dx[argmax_[i]] += gy[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Bilinear resize

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int img = 0; img < n; ++img) {
        for (int ch = 0; ch < c; ++ch) {
          const double* xp = x.data() + (static_cast<int64_t>(img) * c + ch) * h * w;
          double* yp = y.data() + (static_cast<int64_t>(img) * c + ch) * out_h * out_w;
          const double v = (1 - wy) * ((1 - wx) * xp[y0 * w + x0] + wx * xp[y0 * w + x1]) +
                           wy * ((1 - wx) * xp[y1 * w + x0] + wx * xp[y1 * w + x1]);
          yp[oy * out_w + ox] = v;
        }
      }
    }
  }
  return y;
}

Tensor bilinear_resize_backward(const Tensor& gy, int in_h, int in_w) {
  const int n = gy.dim(0), c = gy.dim(1), out_h = gy.dim(2), out_w = gy.dim(3);
  Tensor dx({n, c, in_h, in_w});
  const double sy = static_cast<double>(in_h) / out_h, sx = static_cast<double>(in_w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      for (int img = 0; img < n; ++img) {
        for (int ch = 0; ch < c; ++ch) {
          const double g = gy.data()[((static_cast<int64_t>(img) * c + ch) * out_h + oy) * out_w + ox];
          double* dp = dx.data() + (static_cast<int64_t>(img) * c + ch) * in_h * in_w;
          dp[y0 * in_w + x0] += g * (1 - wy) * (1 - wx);
          dp[y0 * in_w + x1] += g * (1 - wy) * wx;
          dp[y1 * in_w + x0] += g * wy * (1 - wx);
          dp[y1 * in_w + x1] += g * wy * wx;
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Concat / split

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const int n = parts[0]->dim(0), h = parts[0]->dim(2), w = parts[0]->dim(3);
  int ctotal = 0;
  for (const Tensor* t : parts) {
    if (t->dim(0) != n || t->dim(2) != h || t->dim(3) != w)
      throw ShapeError("concat_channels: mismatched shapes");
    ctotal += t->dim(1);
  }
  Tensor y({n, ctotal, h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int img = 0; img < n; ++img) {
    int64_t dst_c = 0;
    for (const Tensor* t : parts) {
      const int tc = t->dim(1);
      std::copy(t->data() + static_cast<int64_t>(img) * tc * hw,
                t->data() + static_cast<int64_t>(img + 1) * tc * hw,
                y.data() + (static_cast<int64_t>(img) * ctotal + dst_c) * hw);
      dst_c += tc;
    }
  }
  return y;
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes) {
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  int sum = 0;
  for (int s : sizes) sum += s;
  if (sum != x.dim(1)) throw ShapeError("split_channels: sizes do not cover input");
  std::vector<Tensor> out;
  const int64_t hw = static_cast<int64_t>(h) * w;
  int64_t src_c = 0;
  for (int s : sizes) {
    Tensor t({n, s, h, w});
    for (int img = 0; img < n; ++img)
      std::copy(x.data() + (static_cast<int64_t>(img) * x.dim(1) + src_c) * hw,
                x.data() + (static_cast<int64_t>(img) * x.dim(1) + src_c + s) * hw,
                t.data() + static_cast<int64_t>(img) * s * hw);
    src_c += s;
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scalar helpers

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logit(double z, double target, double* grad_z, double* grad_t) {
  const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  if (grad_z) *grad_z = sigmoid(z) - target;
  if (grad_t) *grad_t = -z;
  return loss;
}

// ---------------------------------------------------------------------------
// Init

void init_params(const std::vector<Param*>& params, uint64_t seed) {
  for (Param* p : params) {
    Rng rng(mix_seed(seed, fnv1a(p->path)));
    const std::string& path = p->path;
    auto ends_with = [&](const char* suf) {
      const size_t ls = std::strlen(suf);
      return path.size() >= ls && path.compare(path.size() - ls, ls, suf) == 0;
    };
    if (ends_with("/w")) {
      const int fan_in = p->value.dim(1);
      const double std = std::sqrt(2.0 / fan_in);
      for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.normal() * std;
    } else if (ends_with("/gamma") || ends_with("/running_var")) {
      p->value.fill(1.0);
    } else {
      p->value.zero();
    }
    p->grad.zero();
  }
}

int64_t count_trainable(const std::vector<Param*>& params) {
  int64_t n = 0;
  for (const Param* p : params)
    if (p->trainable) n += p->value.numel();
  return n;
}

}  // namespace mura
