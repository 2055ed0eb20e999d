#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "muranet/errors.hpp"

namespace mura {

// Dense row-major tensor of doubles. Activations use NCHW layout.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 4-D accessors, (n, c, h, w).
  double& at(int n, int c, int h, int w) {
    return data_[static_cast<size_t>(offset(n, c, h, w))];
  }
  double at(int n, int c, int h, int w) const {
    return data_[static_cast<size_t>(offset(n, c, h, w))];
  }

  // 3-D accessors, (c, h, w) — e.g. unbatched images.
  double& at3(int c, int h, int w) {
    return data_[static_cast<size_t>((static_cast<int64_t>(c) * shape_[1] + h) * shape_[2] + w)];
  }
  double at3(int c, int h, int w) const {
    return data_[static_cast<size_t>((static_cast<int64_t>(c) * shape_[1] + h) * shape_[2] + w)];
  }

  void fill(double v);
  void zero() { fill(0.0); }

  Tensor& add_(const Tensor& other);               // elementwise, shapes must match
  Tensor& scale_(double s);
  void require_shape(const std::vector<int>& shape, std::string_view what) const;

 private:
  int64_t offset(int n, int c, int h, int w) const {
    return ((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

bool all_finite(const Tensor& t);
std::string shape_str(const std::vector<int>& shape);

// 2-D class-index map (labels per pixel).
struct MaskImage {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  MaskImage() = default;
  MaskImage(int height, int width) : h(height), w(width), v(static_cast<size_t>(height) * width, 0) {}
  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  bool operator==(const MaskImage& o) const { return h == o.h && w == o.w && v == o.v; }
};

uint64_t splitmix64(uint64_t& state);
uint64_t fnv1a(std::string_view s);
// Combines a user seed with a salt (e.g. a parameter path hash or sample index)
// into an independent stream seed.
uint64_t mix_seed(uint64_t seed, uint64_t salt);

// Deterministic scalar RNG. mt19937_64 output is pinned by the standard and the
// double mappings are explicit, so sequences are identical across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi);

  // Standard normal via Box-Muller.
  double normal();

  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = static_cast<decltype(i)>(uniform_int(0, static_cast<int>(i)));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mura
