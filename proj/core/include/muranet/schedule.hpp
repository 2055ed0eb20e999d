#pragma once

#include <optional>
#include <vector>

#include "muranet/config.hpp"

namespace mura {

// Learning rate at epoch fraction t in [0, total_epochs]: linear warmup from
// initial_lr to max_lr over the first warmup_epochs, then cosine decay to
// min_lr. Endpoint values are exact.
double lr_at(const TrainConfig& cfg, double t);

// Paper-style convergence detector: with F the final value, the smallest
// 1-based epoch e with series[e] >= 0.999*F whose whole suffix stays within
// 0.002*F of F; nullopt when no epoch qualifies.
std::optional<int> convergence_epoch(const std::vector<double>& series);

}  // namespace mura
