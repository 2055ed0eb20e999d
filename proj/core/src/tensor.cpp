#include "muranet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mura {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  int64_t n = 1;
  for (int d : shape_) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape_));
    n *= d;
  }
  data_.assign(static_cast<size_t>(n), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

void Tensor::fill(double v) {
  for (auto& x : data_) x = v;
}

Tensor& Tensor::add_(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("add_: shape mismatch " + shape_str(shape_) + " vs " + shape_str(other.shape_));
  }
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::scale_(double s) {
  for (auto& x : data_) x *= s;
  return *this;
}

void Tensor::require_shape(const std::vector<int>& shape, std::string_view what) const {
  if (shape_ != shape) {
    throw ShapeError(std::string(what) + ": expected shape " + shape_str(shape) + ", got " +
                     shape_str(shape_));
  }
}

bool all_finite(const Tensor& t) {
  const double* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL + salt);
  uint64_t a = splitmix64(state);
  uint64_t b = splitmix64(state);
  return a ^ (b << 1);
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw ConfigError("uniform_int: empty range");
  uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
  // Rejection sampling keeps the draw unbiased.
  uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t x;
  do {
    x = eng_();
  } while (x >= limit);
  return lo + static_cast<int>(x % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

}  // namespace mura
