#pragma once

#include <memory>
#include <string>
#include <vector>

#include "muranet/tensor.hpp"

namespace mura {

enum class Mode { kTrain, kInfer };

// A named weight tensor plus its gradient. `trainable == false` marks running
// statistics buffers. `decay == false` exempts the tensor from weight decay
// (norm scales/offsets and biases).
struct Param {
  std::string path;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  bool decay = true;

  Param() = default;
  Param(std::string p, std::vector<int> shape, bool trainable_ = true, bool decay_ = true)
      : path(std::move(p)), value(shape), grad(std::move(shape)), trainable(trainable_), decay(decay_) {}
};

// C(m x n) = A(m x k) * B(k x n), row-major buffers. `accumulate` adds into C.
void gemm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C(m x n) = A^T(k x m)^T... i.e. A is stored (k x m): C = A^T * B(k x n).
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);
// C(m x n) = A(m x k) * B^T where B is stored (n x k).
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate = false);

// General KxK convolution, NCHW, square kernel, zero padding.
class Conv2d {
 public:
  Conv2d(std::string path, int in_ch, int out_ch, int ksize, int stride, int pad, bool bias);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);  // accumulates weight/bias grads, returns grad wrt input
  void collect(std::vector<Param*>& out);

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  Param weight;  // (out_ch, in_ch * k * k)
  Param bias;    // (out_ch) when has_bias

 private:
  int in_ch_, out_ch_, k_, stride_, pad_;
  bool has_bias_;
  Tensor x_;  // cached input (train mode)
};

// 1x1 convolution, stride 1. A plain channel mixer done as one GEMM.
class PwConv {
 public:
  PwConv(std::string path, int in_ch, int out_ch, bool bias);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  Param weight;  // (out_ch, in_ch)
  Param bias;    // (out_ch) when has_bias

 private:
  int in_ch_, out_ch_;
  bool has_bias_;
  Tensor x_;
};

// Depth-wise 3x3 convolution, stride 1, padding 1.
class DwConv3x3 {
 public:
  DwConv3x3(std::string path, int channels);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

  int channels() const { return ch_; }
  Param weight;  // (ch, 9)
  Param bias;    // (ch)

 private:
  int ch_;
  Tensor x_;
};

// Batch normalization over (N, H, W) per channel.
class BatchNorm2d {
 public:
  BatchNorm2d(std::string path, int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

  Param gamma, beta;
  Param running_mean, running_var;  // buffers

 private:
  int ch_;
  double momentum_, eps_;
  Tensor xhat_;
  std::vector<double> invstd_;
};

// Layer-style normalization: per (n, h, w) position, normalized across channels,
// with per-channel scale and offset.
class ChannelNorm {
 public:
  ChannelNorm(std::string path, int channels, double eps = 1e-6);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);

  Param gamma, beta;

 private:
  int ch_;
  double eps_;
  Tensor xhat_;
  std::vector<double> invstd_;  // per position
};

class Gelu {
 public:
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);

 private:
  Tensor x_;
};

// Max pooling with stride 1 and same spatial size. Windows are clipped at the
// borders, so a constant plane pools to itself.
class MaxPoolSame {
 public:
  explicit MaxPoolSame(int ksize) : k_(ksize) {}

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& gy);

 private:
  int k_;
  std::vector<int> in_shape_;
  std::vector<int64_t> argmax_;
};

// Bilinear interpolation (half-pixel centers), and its adjoint.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);
Tensor bilinear_resize_backward(const Tensor& gy, int in_h, int in_w);

// Channel concatenation/splitting, NCHW.
Tensor concat_channels(const std::vector<const Tensor*>& parts);
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes);

double sigmoid(double z);
// Numerically stable binary cross entropy on a logit. grad_z gets d/dz, and
// grad_t (optional) gets d/dtarget = -z.
double bce_with_logit(double z, double target, double* grad_z, double* grad_t = nullptr);

// He-style init for all params rooted at a module: conv weights are zero-mean
// normals scaled by fan-in, norm scales 1, everything else 0. Each tensor's
// stream is derived from (seed, path) so results do not depend on creation
// order.
void init_params(const std::vector<Param*>& params, uint64_t seed);
int64_t count_trainable(const std::vector<Param*>& params);

}  // namespace mura
