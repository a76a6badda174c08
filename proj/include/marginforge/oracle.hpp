// Independent verification tools: central finite-difference gradients and an
// extended-precision re-evaluation of the margin loss.
//
// This header deliberately shares no computation with losses.hpp (only the
// data types). reference_loss uses long double arithmetic, raw exponentials
// and compensated summation instead of the shifted log-sum-exp route, so the
// two paths have no common failure mode. The main kernels must match this
// file, never the reverse.
#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "marginforge/types.hpp"

namespace marginforge {

struct FDSpec {
  double step = 1e-5;
  double tolerance = 1e-6;            // relative, against unit scale
  double kink_exclusion_radius = 1e-4;
};

// Central finite differences: g_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
template <typename F>
std::vector<double> finite_diff_gradient(F&& f, std::vector<double> x,
                                         const FDSpec& spec = {}) {
  if (!(spec.step > 0.0))
    throw std::invalid_argument("finite_diff_gradient: step must be > 0");
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + spec.step;
    const double fp = f(x);
    x[i] = xi - spec.step;
    const double fm = f(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error(
          "finite_diff_gradient: non-finite evaluation at coordinate " +
          std::to_string(i));
    g[i] = (fp - fm) / (2.0 * spec.step);
  }
  return g;
}

// Largest elementwise deviation, measured against unit scale so that
// near-zero reference entries do not inflate the ratio:
//   max_i |a_i - b_i| / max(1, |b_i|).
inline double max_rel_error(const std::vector<double>& a,
                            const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("max_rel_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(1.0, std::fabs(b[i]));
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

// True when z sits near a non-differentiable point of the margin loss:
// either the sample margin z_y - max_{j != y} z_j is within `radius` of the
// hinge/branch kink, or the two largest rival logits are tied within
// `radius` (argmax routing kink).
inline bool near_kink(const LogitVector& z, int y, double radius) {
  const int k = static_cast<int>(z.size());
  double top = -std::numeric_limits<double>::infinity();
  double runner_up = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) {
    if (j == y) continue;
    if (z[j] > top) {
      runner_up = top;
      top = z[j];
    } else if (z[j] > runner_up) {
      runner_up = z[j];
    }
  }
  if (std::fabs(z[y] - top) < radius) return true;
  if (k >= 3 && std::fabs(top - runner_up) < radius) return true;
  return false;
}

// Extended-precision re-evaluation of the margin loss value. Structurally
// distinct route: raw long double exponentials summed with Kahan
// compensation, no max shift. Valid for |z| up to 500.
inline double reference_loss(const LogitVector& z, int y,
                             const MarginParams& params,
                             const ClassCounts* counts = nullptr) {
  const int k = static_cast<int>(z.size());
  if (k < 2) throw std::invalid_argument("reference_loss: need K >= 2 classes");
  if (y < 0 || y >= k)
    throw std::invalid_argument("reference_loss: label out of range");
  for (double v : z)
    if (!std::isfinite(v))
      throw std::invalid_argument("reference_loss: non-finite logit");
  params.validate();
  if (params.class_aware && counts == nullptr)
    throw std::invalid_argument("reference_loss: class-aware margins require counts");

  long double top = -std::numeric_limits<long double>::infinity();
  for (int j = 0; j < k; ++j) {
    if (j == y) continue;
    if (static_cast<long double>(z[j]) > top) top = z[j];
  }

  long double delta = 0.0L;
  if (params.margin_mode == MarginMode::kMM) {
    long double dneg = params.delta_neg;
    if (params.class_aware) {
      counts->validate();
      if (counts->num_classes() != k)
        throw std::invalid_argument("reference_loss: counts/logits class mismatch");
      const long double c =
          params.ldam_c
              ? static_cast<long double>(*params.ldam_c)
              : 0.5L * powl(static_cast<long double>(counts->min_count()), 0.25L);
      dneg -= c / powl(static_cast<long double>(counts->counts[y]), 0.25L);
    }
    const long double zy = z[y];
    if (zy >= top) {
      const long double dpos = dneg * static_cast<long double>(params.beta);
      const long double hinge = zy - top > 0.0L ? zy - top : 0.0L;
      delta = expl(-hinge - dpos);
    } else {
      delta = expl(-(top - zy) - dneg);
    }
  }

  const long double uy = static_cast<long double>(z[y]) - delta;

  // Kahan-compensated denominator.
  long double sum = 0.0L;
  long double comp = 0.0L;
  auto add = [&](long double term) {
    const long double t = term - comp;
    const long double s = sum + t;
    comp = (s - sum) - t;
    sum = s;
  };
  add(expl(uy));
  for (int j = 0; j < k; ++j) {
    if (j == y) continue;
    add(expl(static_cast<long double>(z[j])));
  }

  return static_cast<double>(logl(sum) - uy);
}

}  // namespace marginforge
