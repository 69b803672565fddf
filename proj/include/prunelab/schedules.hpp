#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunelab/error.hpp"
#include "prunelab/mask.hpp"
#include "prunelab/models.hpp"

namespace prunelab {

struct KeepRatioSchedule {
  std::vector<double> ratios;
  std::vector<std::size_t> quotas;
  double target_sparsity = 0.0;

  std::size_t total_quota() const {
    return std::accumulate(quotas.begin(), quotas.end(), std::size_t{0});
  }

  void validate(const std::vector<std::size_t>& sizes) const {
    require(quotas.size() == sizes.size() && ratios.size() == sizes.size(), ErrorKind::alignment,
            "schedule has " + std::to_string(quotas.size()) + " layers, network has " +
                std::to_string(sizes.size()));
    for (std::size_t l = 0; l < sizes.size(); ++l)
      require(quotas[l] <= sizes[l], ErrorKind::alignment,
              "layer " + std::to_string(l) + " quota exceeds its size");
  }

  friend bool operator==(const KeepRatioSchedule&, const KeepRatioSchedule&) = default;
};

enum class ScheduleKind { smart, balanced, ascending, linear, cubic, extracted };

inline ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "smart") return ScheduleKind::smart;
  if (name == "balanced") return ScheduleKind::balanced;
  if (name == "ascending") return ScheduleKind::ascending;
  if (name == "linear" || name == "linearDecay") return ScheduleKind::linear;
  if (name == "cubic" || name == "cubicDecay") return ScheduleKind::cubic;
  if (name == "extracted") return ScheduleKind::extracted;
  fail(ErrorKind::usage, "unknown schedule kind '" + std::string(name) + "'");
}

constexpr std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::smart: return "smart";
    case ScheduleKind::balanced: return "balanced";
    case ScheduleKind::ascending: return "ascending";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cubic: return "cubic";
    case ScheduleKind::extracted: return "extracted";
  }
  return "smart";
}

inline constexpr double kOutputKeepRatio = 0.3;

inline std::size_t total_weights(std::span<const std::size_t> sizes) {
  return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
}

// round((1 - p) * sum m_l)
inline std::size_t retained_budget(std::span<const std::size_t> sizes, double target_sparsity) {
  return static_cast<std::size_t>(
      std::llround((1.0 - target_sparsity) * static_cast<double>(total_weights(sizes))));
}

// Largest-remainder apportionment of real-valued retained counts onto integer
// quotas summing to `budget`, each within [0, m_l]. Ties go to the lower layer.
inline std::vector<std::size_t> apportion(std::span<const double> targets,
                                          std::span<const std::size_t> sizes,
                                          std::size_t budget) {
  require(targets.size() == sizes.size(), ErrorKind::alignment, "apportion: size mismatch");
  require(budget <= total_weights(sizes), ErrorKind::infeasible_sparsity,
          "budget exceeds network size");
  const std::size_t n = sizes.size();
  std::vector<std::size_t> quotas(n);
  std::vector<double> remainder(n);
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < n; ++l) {
    const double t = std::clamp(targets[l], 0.0, static_cast<double>(sizes[l]));
    quotas[l] = static_cast<std::size_t>(std::floor(t));
    remainder[l] = t - static_cast<double>(quotas[l]);
    assigned += quotas[l];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  while (assigned < budget) {
    bool progressed = false;
    for (std::size_t l : order) {
      if (assigned == budget) break;
      if (quotas[l] < sizes[l]) {
        ++quotas[l];
        ++assigned;
        progressed = true;
      }
    }
    require(progressed, ErrorKind::infeasible_sparsity, "apportion: no capacity left");
  }
  while (assigned > budget) {
    for (auto it = order.rbegin(); it != order.rend() && assigned > budget; ++it)
      if (quotas[*it] > 0) {
        --quotas[*it];
        --assigned;
      }
  }
  return quotas;
}

inline KeepRatioSchedule finalize_schedule(std::span<const double> targets,
                                           std::span<const std::size_t> sizes,
                                           std::size_t budget, double target_sparsity) {
  KeepRatioSchedule s;
  s.quotas = apportion(targets, sizes, budget);
  s.target_sparsity = target_sparsity;
  for (std::size_t l = 0; l < sizes.size(); ++l)
    s.ratios.push_back(sizes[l] == 0 ? 1.0
                                     : static_cast<double>(s.quotas[l]) /
                                           static_cast<double>(sizes[l]));
  return s;
}

// Real-valued retained counts for the hidden layers: raw weights scaled
// linearly to `budget`, then any layer above ratio 1 is capped and its
// excess carried to the next deeper layer. Returns the counts and whatever
// excess is still carried past the last hidden layer.
struct HiddenAllocation {
  std::vector<double> retained;
  double carry = 0.0;
};

inline HiddenAllocation allocate_hidden(std::span<const double> raw,
                                        std::span<const std::size_t> sizes, double budget) {
  require(raw.size() == sizes.size(), ErrorKind::alignment, "raw weights do not match layers");
  double denom = 0.0;
  for (std::size_t l = 0; l < raw.size(); ++l) {
    require(raw[l] >= 0.0 && std::isfinite(raw[l]), ErrorKind::domain,
            "raw keep weights must be finite and nonnegative");
    denom += raw[l] * static_cast<double>(sizes[l]);
  }
  HiddenAllocation out;
  out.retained.assign(raw.size(), 0.0);
  if (budget <= 0.0) return out;
  require(denom > 0.0, ErrorKind::infeasible_sparsity, "no hidden capacity to allocate");
  const double alpha = budget / denom;
  double carry = 0.0;
  for (std::size_t l = 0; l < raw.size(); ++l) {
    double t = alpha * raw[l] * static_cast<double>(sizes[l]) + carry;
    carry = 0.0;
    const double cap = static_cast<double>(sizes[l]);
    if (t > cap) {
      carry = t - cap;
      t = cap;
    }
    out.retained[l] = t;
  }
  out.carry = carry;
  return out;
}

// (L-l+1)^2 + (L-l+1) for hidden layers l = 1..L-1, divided by l^2 for the
// fast-decay family. L counts every layer including the output.
inline std::vector<double> smart_raw_weights(std::size_t layer_count, ArchFamily family) {
  std::vector<double> raw;
  const double big_l = static_cast<double>(layer_count);
  for (std::size_t l = 1; l < layer_count; ++l) {
    const double depth = big_l - static_cast<double>(l) + 1.0;
    double r = depth * depth + depth;
    if (family == ArchFamily::fast_decay_stack) r /= static_cast<double>(l * l);
    raw.push_back(r);
  }
  return raw;
}

// Output layer held at 30%, hidden layers proportional to `raw`, with cap
// redistribution and exact-budget finalization.
inline KeepRatioSchedule schedule_from_raw(std::span<const std::size_t> sizes,
                                           std::span<const double> raw, double target_sparsity) {
  require(sizes.size() >= 2, ErrorKind::spec, "schedules need at least two layers");
  require(target_sparsity > 0.0 && target_sparsity < 1.0, ErrorKind::domain,
          "target sparsity must lie in (0, 1)");
  require(raw.size() + 1 == sizes.size(), ErrorKind::alignment,
          "one raw weight per hidden layer required");
  const std::size_t budget = retained_budget(sizes, target_sparsity);
  const std::size_t out_m = sizes.back();
  const double out_target = kOutputKeepRatio * static_cast<double>(out_m);
  require(static_cast<double>(budget) >= out_target, ErrorKind::infeasible_sparsity,
          "retained budget " + std::to_string(budget) + " below the output-layer quota");
  const auto hidden = sizes.first(sizes.size() - 1);
  HiddenAllocation alloc =
      allocate_hidden(raw, hidden, static_cast<double>(budget) - out_target);
  std::vector<double> targets = alloc.retained;
  double out_retained = out_target + alloc.carry;
  // Excess that cleared every hidden layer lands on the output layer; what the
  // output cannot hold walks back through the hidden layers, deepest first.
  double spill = std::max(0.0, out_retained - static_cast<double>(out_m));
  for (std::size_t l = targets.size(); l-- > 0 && spill > 1e-9;) {
    const double room = static_cast<double>(hidden[l]) - targets[l];
    const double take = std::min(room, spill);
    targets[l] += take;
    spill -= take;
  }
  if (spill > 1e-9)
    fail(ErrorKind::infeasible_sparsity,
         "sparsity " + std::to_string(target_sparsity) + " cannot be absorbed by the layers");
  targets.push_back(std::min(out_retained, static_cast<double>(out_m)));
  return finalize_schedule(targets, sizes, budget, target_sparsity);
}

inline KeepRatioSchedule smart_ratio(std::span<const std::size_t> sizes, double target_sparsity,
                                     ArchFamily family) {
  const auto raw = smart_raw_weights(sizes.size(), family);
  return schedule_from_raw(sizes, raw, target_sparsity);
}

inline KeepRatioSchedule smart_ratio(const std::vector<LayerSpec>& specs, double target_sparsity,
                                     ArchFamily family) {
  validate_specs(specs);
  const auto sizes = layer_sizes(specs);
  return smart_ratio(sizes, target_sparsity, family);
}

inline KeepRatioSchedule ablation_schedule(ScheduleKind kind, std::span<const std::size_t> sizes,
                                           double target_sparsity,
                                           ArchFamily family = ArchFamily::plain_stack) {
  const std::size_t big_l = sizes.size();
  require(big_l >= 2, ErrorKind::spec, "schedules need at least two layers");
  std::vector<double> raw;
  switch (kind) {
    case ScheduleKind::smart:
      return smart_ratio(sizes, target_sparsity, family);
    case ScheduleKind::balanced:
      raw.assign(big_l - 1, 1.0);
      break;
    case ScheduleKind::linear:
      for (std::size_t l = 1; l < big_l; ++l) raw.push_back(static_cast<double>(big_l - l + 1));
      break;
    case ScheduleKind::cubic:
      for (std::size_t l = 1; l < big_l; ++l) raw.push_back(std::pow(static_cast<double>(big_l - l + 1), 3));
      break;
    case ScheduleKind::ascending: {
      const KeepRatioSchedule smart = smart_ratio(sizes, target_sparsity, family);
      raw.assign(smart.ratios.rbegin() + 1, smart.ratios.rend());
      break;
    }
    case ScheduleKind::extracted:
      fail(ErrorKind::usage, "extracted schedules come from a mask, not a formula");
  }
  return schedule_from_raw(sizes, raw, target_sparsity);
}

inline KeepRatioSchedule ablation_schedule(ScheduleKind kind, const std::vector<LayerSpec>& specs,
                                           double target_sparsity,
                                           ArchFamily family = ArchFamily::plain_stack) {
  validate_specs(specs);
  const auto sizes = layer_sizes(specs);
  return ablation_schedule(kind, sizes, target_sparsity, family);
}

inline KeepRatioSchedule extract_schedule(const Mask& mask) {
  KeepRatioSchedule s;
  s.quotas = mask.kept_counts();
  s.ratios = keep_ratios(mask);
  s.target_sparsity = sparsity(mask);
  return s;
}

// Arbitrary per-layer ratios, rounded onto an exact total budget.
inline KeepRatioSchedule schedule_from_ratios(std::span<const double> ratios,
                                              std::span<const std::size_t> sizes) {
  require(ratios.size() == sizes.size(), ErrorKind::alignment, "ratio count mismatch");
  std::vector<double> targets;
  double total = 0.0;
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    require(ratios[l] >= 0.0 && ratios[l] <= 1.0, ErrorKind::domain, "ratios must lie in [0, 1]");
    targets.push_back(ratios[l] * static_cast<double>(sizes[l]));
    total += targets.back();
  }
  const auto budget = static_cast<std::size_t>(std::llround(total));
  const std::size_t n = total_weights(sizes);
  return finalize_schedule(targets, sizes, budget,
                           n == 0 ? 0.0 : 1.0 - static_cast<double>(budget) / static_cast<double>(n));
}

}  // namespace prunelab
