// Margin-loss kernels for class-imbalanced classification.
//
// The family is built from two exp-transformed sample margins:
//
//   hard positive margin  D+ = exp(-max(z_y - max_{j!=y} z_j, 0) - delta_pos)
//   hard negative margin  D- = exp(-max(max_{j!=y} z_j - z_y, 0) - delta_neg)
//
// A per-example selector picks D+ when the example is classified correctly
// (ties count as correct) and D- otherwise; the selected margin is enforced
// through a smoothed cross-entropy:
//
//   L = -log( e^{z_y - D} / (e^{z_y - D} + sum_{j!=y} e^{z_j}) )
//
// Offsets are coupled as delta_pos = delta_neg * beta; in class-aware mode
// both are shifted by the count-dependent margin gamma_j = C / n_j^{1/4}.
// Baseline losses (cross-entropy, focal, class-margin/LDAM) share the same
// return contract. Every kernel returns the analytic gradient with respect
// to the logits; gradients are verified against oracle.hpp in the tests.
//
// All functions are pure; identical inputs give bit-identical outputs.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "marginforge/types.hpp"

namespace marginforge {

namespace detail {

inline void check_logits(const LogitVector& z, int y, const char* where) {
  if (z.size() < 2)
    throw std::invalid_argument(std::string(where) +
                                ": need K >= 2 classes, got " +
                                std::to_string(z.size()));
  if (y < 0 || y >= static_cast<int>(z.size()))
    throw std::invalid_argument(std::string(where) + ": label " +
                                std::to_string(y) + " out of range");
  for (double v : z)
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string(where) + ": non-finite logit");
}

// Index of the largest rival logit; smallest index wins ties so that
// gradient routing is deterministic.
inline int top_other_index(const LogitVector& z, int y) {
  int best = -1;
  double top = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < static_cast<int>(z.size()); ++j) {
    if (j == y) continue;
    if (z[j] > top) {
      top = z[j];
      best = j;
    }
  }
  return best;
}

// Softmax cross-entropy with the true-class logit shifted down by `delta`,
// evaluated via max-shifted log-sum-exp. No intermediate exponential sees a
// raw logit, so the computation is safe for |z| up to 500. `prob` receives
// the softmax of the shifted logits.
inline double shifted_xent(const LogitVector& z, int y, double delta,
                           std::vector<double>& prob) {
  const int k = static_cast<int>(z.size());
  prob.resize(k);
  const double uy = z[y] - delta;
  double mx = uy;
  for (int j = 0; j < k; ++j)
    if (j != y) mx = std::max(mx, z[j]);
  double sum = 0.0;
  for (int j = 0; j < k; ++j) {
    prob[j] = std::exp((j == y ? uy : z[j]) - mx);
    sum += prob[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < k; ++j) prob[j] *= inv;
  return std::log(sum) + mx - uy;
}

inline void warn_negative_offset(double delta_neg) {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true))
    std::fprintf(stderr,
                 "marginforge: effective margin offset %g is negative; the "
                 "enforced margin will exceed 1\n",
                 delta_neg);
}

}  // namespace detail

inline double hard_positive_margin(const LogitVector& z, int y,
                                   double delta_plus) {
  detail::check_logits(z, y, "hard_positive_margin");
  if (!std::isfinite(delta_plus))
    throw std::invalid_argument("hard_positive_margin: non-finite delta");
  const double rival = z[detail::top_other_index(z, y)];
  return std::exp(-std::max(z[y] - rival, 0.0) - delta_plus);
}

inline double hard_negative_margin(const LogitVector& z, int y,
                                   double delta_minus) {
  detail::check_logits(z, y, "hard_negative_margin");
  if (!std::isfinite(delta_minus))
    throw std::invalid_argument("hard_negative_margin: non-finite delta");
  const double rival = z[detail::top_other_index(z, y)];
  return std::exp(-std::max(rival - z[y], 0.0) - delta_minus);
}

// Count-dependent class margins gamma_j = C / n_j^{1/4}.
inline std::vector<double> ldam_gammas(const ClassCounts& counts, double c) {
  counts.validate();
  if (!(c >= 0.0) || !std::isfinite(c))
    throw std::invalid_argument("ldam_gammas: C must be finite and >= 0");
  std::vector<double> gammas(counts.counts.size());
  for (std::size_t j = 0; j < gammas.size(); ++j)
    gammas[j] = c / std::pow(static_cast<double>(counts.counts[j]), 0.25);
  return gammas;
}

// The C that makes the rarest class's gamma equal `target_max_gamma`.
inline double ldam_constant_for_max_gamma(const ClassCounts& counts,
                                          double target_max_gamma = 0.5) {
  counts.validate();
  return target_max_gamma *
         std::pow(static_cast<double>(counts.min_count()), 0.25);
}

// Effective (delta_neg, delta_pos) for class y, after the optional
// class-aware shift. Negative effective offsets are legal (the enforced
// margin then exceeds 1) and are only warned about.
inline std::pair<double, double> effective_deltas(const MarginParams& params,
                                                  int y,
                                                  const ClassCounts* counts) {
  params.validate();
  double dneg = params.delta_neg;
  if (params.class_aware) {
    if (counts == nullptr)
      throw std::invalid_argument(
          "effective_deltas: class-aware margins require ClassCounts");
    counts->validate();
    if (y < 0 || y >= counts->num_classes())
      throw std::invalid_argument("effective_deltas: label out of range");
    const double c =
        params.ldam_c ? *params.ldam_c : ldam_constant_for_max_gamma(*counts);
    dneg -= c / std::pow(static_cast<double>(counts->counts[y]), 0.25);
    if (dneg < 0.0) detail::warn_negative_offset(dneg);
  }
  return {dneg, dneg * params.beta};
}

struct MarginValue {
  double delta = 0.0;
  MarginBranch branch = MarginBranch::kPositive;
};

// The margin selector: picks the hard positive margin when the model ranks
// the true class on top (ties included), the hard negative margin otherwise.
inline MarginValue mm_margin(const LogitVector& z, int y,
                             const MarginParams& params,
                             const ClassCounts* counts = nullptr) {
  detail::check_logits(z, y, "mm_margin");
  if (params.class_aware && counts == nullptr)
    throw std::invalid_argument(
        "mm_margin: class-aware margins require ClassCounts");
  if (params.class_aware && counts->num_classes() != static_cast<int>(z.size()))
    throw std::invalid_argument("mm_margin: counts/logits class mismatch");
  const int rival = detail::top_other_index(z, y);
  const double sample_margin = z[y] - z[rival];
  const MarginBranch branch =
      sample_margin >= 0.0 ? MarginBranch::kPositive : MarginBranch::kNegative;
  if (params.margin_mode == MarginMode::kNone) {
    params.validate();
    return {0.0, branch};
  }
  const auto [dneg, dpos] = effective_deltas(params, y, counts);
  const double delta = branch == MarginBranch::kPositive
                           ? std::exp(-sample_margin - dpos)
                           : std::exp(sample_margin - dneg);
  return {delta, branch};
}

// The maximum-margin loss: smoothed cross-entropy with the selected margin
// enforced on the true-class logit.
//
// GradMode::kStopMargin treats the margin as a constant. GradMode::kFull
// differentiates through it: with g the clamped sample margin and D the
// enforced margin, dD/dz_y = -D (positive branch, hinge active), +D
// (negative branch), and the rival logit receives the opposite sign. The
// hinge subgradient at exactly zero is taken as 0.
inline LossResult mm_loss(const LogitVector& z, int y,
                          const MarginParams& params,
                          const ClassCounts* counts = nullptr) {
  const MarginValue mv = mm_margin(z, y, params, counts);
  LossResult out;
  out.margin_used = mv.delta;
  out.branch = mv.branch;
  out.value = detail::shifted_xent(z, y, mv.delta, out.grad);
  const double py = out.grad[y];
  for (int j = 0; j < static_cast<int>(out.grad.size()); ++j)
    out.grad[j] -= (j == y) ? 1.0 : 0.0;
  if (params.margin_mode == MarginMode::kMM &&
      params.grad_mode == GradMode::kFull) {
    const int rival = detail::top_other_index(z, y);
    double ddelta_dzy = 0.0;
    if (mv.branch == MarginBranch::kNegative) {
      ddelta_dzy = mv.delta;
    } else if (z[y] - z[rival] > 0.0) {
      ddelta_dzy = -mv.delta;
    }
    if (ddelta_dzy != 0.0) {
      const double coef = 1.0 - py;  // dL/dD
      out.grad[y] += coef * ddelta_dzy;
      out.grad[rival] -= coef * ddelta_dzy;
    }
  }
  return out;
}

inline LossResult cross_entropy_loss(const LogitVector& z, int y) {
  detail::check_logits(z, y, "cross_entropy_loss");
  LossResult out;
  const int rival = detail::top_other_index(z, y);
  out.branch = z[y] >= z[rival] ? MarginBranch::kPositive
                                : MarginBranch::kNegative;
  out.value = detail::shifted_xent(z, y, 0.0, out.grad);
  for (int j = 0; j < static_cast<int>(out.grad.size()); ++j)
    out.grad[j] -= (j == y) ? 1.0 : 0.0;
  return out;
}

// Focal loss (1 - p_y)^gamma_f * CE on softmax probabilities. gamma_f = 0
// reproduces cross-entropy bit for bit.
inline LossResult focal_loss(const LogitVector& z, int y,
                             double focal_gamma = 2.0) {
  detail::check_logits(z, y, "focal_loss");
  if (!(focal_gamma >= 0.0) || !std::isfinite(focal_gamma))
    throw std::invalid_argument("focal_loss: exponent must be finite and >= 0");
  LossResult out;
  const int rival = detail::top_other_index(z, y);
  out.branch = z[y] >= z[rival] ? MarginBranch::kPositive
                                : MarginBranch::kNegative;
  std::vector<double>& p = out.grad;
  const double ce = detail::shifted_xent(z, y, 0.0, p);
  const double py = p[y];
  // 1 - p_y as the complementary sum, free of cancellation.
  double omq = 0.0;
  for (int j = 0; j < static_cast<int>(p.size()); ++j)
    if (j != y) omq += p[j];
  out.value = std::pow(omq, focal_gamma) * ce;
  if (omq == 0.0) {
    // p_y == 1: the loss sits at its minimum, every direction is flat.
    std::fill(p.begin(), p.end(), 0.0);
    return out;
  }
  // dL/dq * q, with q = p_y, expanded analytically so gamma_f = 0 yields
  // exactly -1.
  const double dldq_q =
      -(focal_gamma * std::pow(omq, focal_gamma - 1.0) * ce * py +
        std::pow(omq, focal_gamma));
  for (int j = 0; j < static_cast<int>(p.size()); ++j) {
    const double indicator = (j == y) ? 1.0 : 0.0;
    out.grad[j] = dldq_q * (indicator - p[j]);
  }
  return out;
}

// Cross-entropy with a constant per-class margin gamma_y = C / n_y^{1/4}
// enforced on the true-class logit (the label-distribution-aware baseline).
inline LossResult ldam_loss(const LogitVector& z, int y,
                            const ClassCounts& counts,
                            std::optional<double> c = {}) {
  detail::check_logits(z, y, "ldam_loss");
  counts.validate();
  if (counts.num_classes() != static_cast<int>(z.size()))
    throw std::invalid_argument("ldam_loss: counts/logits class mismatch");
  const double cc = c ? *c : ldam_constant_for_max_gamma(counts);
  if (!(cc >= 0.0) || !std::isfinite(cc))
    throw std::invalid_argument("ldam_loss: C must be finite and >= 0");
  const double gamma_y =
      cc / std::pow(static_cast<double>(counts.counts[y]), 0.25);
  LossResult out;
  const int rival = detail::top_other_index(z, y);
  out.branch = z[y] >= z[rival] ? MarginBranch::kPositive
                                : MarginBranch::kNegative;
  out.margin_used = gamma_y;
  out.value = detail::shifted_xent(z, y, gamma_y, out.grad);
  for (int j = 0; j < static_cast<int>(out.grad.size()); ++j)
    out.grad[j] -= (j == y) ? 1.0 : 0.0;
  return out;
}

inline LossResult baseline_loss(BaselineKind kind, const LogitVector& z, int y,
                                const BaselineOptions& opts = {}) {
  switch (kind) {
    case BaselineKind::kCrossEntropy:
      return cross_entropy_loss(z, y);
    case BaselineKind::kFocal:
      return focal_loss(z, y, opts.focal_gamma);
    case BaselineKind::kLdam:
      if (opts.counts == nullptr)
        throw std::invalid_argument("baseline_loss: LDAM requires ClassCounts");
      return ldam_loss(z, y, *opts.counts, opts.ldam_c);
  }
  throw std::invalid_argument("baseline_loss: unknown kind");
}

}  // namespace marginforge
