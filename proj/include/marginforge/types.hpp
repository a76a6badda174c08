// Shared domain types for the margin-loss family.
//
// These are plain data carriers; the computational kernels live in
// losses.hpp, the independent verification path in oracle.hpp.
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace marginforge {

// Per-class raw scores z for one example, one entry per class.
using LogitVector = std::vector<double>;

// Per-class training sample counts n_j.
struct ClassCounts {
  std::vector<std::int64_t> counts;

  ClassCounts() = default;
  explicit ClassCounts(std::vector<std::int64_t> c) : counts(std::move(c)) {}

  int num_classes() const { return static_cast<int>(counts.size()); }

  std::int64_t min_count() const {
    std::int64_t m = counts.front();
    for (auto c : counts) m = std::min(m, c);
    return m;
  }

  std::int64_t max_count() const {
    std::int64_t m = counts.front();
    for (auto c : counts) m = std::max(m, c);
    return m;
  }

  double imbalance_ratio() const {
    return static_cast<double>(max_count()) / static_cast<double>(min_count());
  }

  void validate() const {
    if (counts.empty())
      throw std::invalid_argument("ClassCounts: empty count vector");
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] < 1)
        throw std::invalid_argument("ClassCounts: class " + std::to_string(j) +
                                    " has count " + std::to_string(counts[j]) +
                                    ", expected >= 1");
    }
  }
};

// FULL differentiates through the margin term; STOP_MARGIN treats it as a
// per-step constant (the convention of LDAM-style implementations).
enum class GradMode { kFull, kStopMargin };

// kNone forces the margin to zero, reducing the loss to cross-entropy.
enum class MarginMode { kMM, kNone };

// Which case of the margin selector fired: the example was classified
// correctly (positive) or not (negative).
enum class MarginBranch { kPositive, kNegative };

// Hyperparameters of the maximum-margin loss family.
//
// The positive offset is derived, never stored: delta_pos = delta_neg * beta.
// In class-aware mode both offsets are shifted per class by the
// count-dependent margin gamma_j = C / n_j^{1/4}; `ldam_c` left unset means
// C is chosen so that the largest gamma_j equals 0.5.
struct MarginParams {
  double delta_neg = 0.6;
  double beta = 1.5;
  std::optional<double> ldam_c{};
  double scale = 10.0;
  bool class_aware = false;
  GradMode grad_mode = GradMode::kFull;
  MarginMode margin_mode = MarginMode::kMM;

  void validate() const {
    if (!(delta_neg >= 0.0) || !std::isfinite(delta_neg))
      throw std::invalid_argument("MarginParams: delta_neg must be finite and >= 0");
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw std::invalid_argument("MarginParams: beta must be finite and > 0");
    if (!(scale > 0.0) || !std::isfinite(scale))
      throw std::invalid_argument("MarginParams: scale must be finite and > 0");
    if (ldam_c && (!(*ldam_c >= 0.0) || !std::isfinite(*ldam_c)))
      throw std::invalid_argument("MarginParams: C must be finite and >= 0");
  }
};

// Value and analytic gradient of a loss at one example.
struct LossResult {
  double value = 0.0;
  std::vector<double> grad;
  double margin_used = 0.0;
  MarginBranch branch = MarginBranch::kPositive;
};

enum class BaselineKind { kCrossEntropy, kFocal, kLdam };

struct BaselineOptions {
  double focal_gamma = 2.0;
  const ClassCounts* counts = nullptr;
  std::optional<double> ldam_c{};
};

}  // namespace marginforge
