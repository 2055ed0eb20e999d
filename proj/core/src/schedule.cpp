#include <cmath>

#include "muranet/errors.hpp"
#include "muranet/schedule.hpp"

namespace mura {

double lr_at(const TrainConfig& cfg, double t) {
  cfg.validate();
  const double warmup = cfg.warmup_epochs;
  const double total = cfg.total_epochs;
  if (t < 0.0 || t > total) throw ConfigError("lr_at: epoch fraction outside [0, total_epochs]");
  // Exact endpoints; the formulas below agree analytically but not bit-wise.
  if (t == 0.0) return cfg.initial_lr;
  if (t == warmup) return cfg.max_lr;
  if (t == total) return cfg.min_lr;
  if (t < warmup) return cfg.initial_lr + (cfg.max_lr - cfg.initial_lr) * (t / warmup);
  const double tau = (t - warmup) / (total - warmup);
  return cfg.min_lr + (cfg.max_lr - cfg.min_lr) * (1.0 + std::cos(M_PI * tau)) / 2.0;
}

std::optional<int> convergence_epoch(const std::vector<double>& series) {
  if (series.empty()) throw DataError("convergence_epoch: empty series");
  const double f = series.back();
  if (!(f > 0.0)) throw DataError("convergence_epoch: final value must be positive");
  const double reach = 0.999 * f;
  const double band = 0.002 * f;
  // suffix_ok[i]: every element from i on stays within the fluctuation band.
  const size_t n = series.size();
  std::vector<char> suffix_ok(n);
  bool ok = true;
  for (size_t i = n; i-- > 0;) {
    ok = ok && std::abs(series[i] - f) <= band;
    suffix_ok[i] = ok;
  }
  for (size_t i = 0; i < n; ++i)
    if (series[i] >= reach && suffix_ok[i]) return static_cast<int>(i) + 1;  // 1-based
  return std::nullopt;
}

}  // namespace mura
