#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/random.hpp"
#include "handdi/tensor.hpp"

namespace handdi {

/// Loss at one probe point plus the sign pattern of all piecewise-linear
/// activations. Probes whose +/- perturbations change the pattern straddle a
/// kink, where a central difference is not a derivative estimate.
struct ProbeEvaluation {
  long double loss = 0.0;  // wide so extended-precision closures keep their digits
  std::vector<std::uint8_t> kinks;
};

struct GradCheckOptions {
  std::size_t probes_per_tensor = 12;  // all coordinates when the tensor is smaller
  double epsilon = 1e-5;
  // Denominator floor of the relative error; keeps coordinates whose true
  // gradient is below central-difference round-off from dominating.
  double magnitude_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct CoordinateCheck {
  std::string group;
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::size_t kink_skips = 0;
  std::vector<CoordinateCheck> worst_per_group;  // one entry per group, first-seen order
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace detail {

template <class F>
ProbeEvaluation evaluate_probe(F& loss_at) {
  if constexpr (std::is_same_v<std::invoke_result_t<F&>, ProbeEvaluation>) {
    return loss_at();
  } else {
    return ProbeEvaluation{static_cast<long double>(loss_at()), {}};
  }
}

}  // namespace detail

/// Compares analytic gradients against central differences
/// (f(theta + eps) - f(theta - eps)) / 2 eps on sampled coordinates.
///
/// `loss_at` re-evaluates the loss at the current contents of `params` and
/// returns either a double or a ProbeEvaluation. `groups[t]` labels tensor t
/// in the report. Parameters are restored after each probe.
template <class F>
  requires std::invocable<F&>
GradCheckReport finite_diff_check(F&& loss_at, std::span<Tensor<double>> params, std::span<const Tensor<double>> analytic,
                                  std::span<const std::string> groups, const GradCheckOptions& options = {}) {
  if (params.size() != analytic.size() || params.size() != groups.size()) {
    throw DimensionError("finite_diff_check: params, gradients and group labels must align");
  }
  if (!(options.epsilon > 0.0)) throw ParameterError("finite_diff_check: epsilon must be positive");

  const ProbeEvaluation base = detail::evaluate_probe(loss_at);
  if (!std::isfinite(base.loss)) throw NumericError("finite_diff_check: non-finite loss at the base point");

  GradCheckReport report;
  Rng rng = make_rng(options.seed, Stream::GradCheck);

  auto worst_slot = [&](const std::string& group) -> CoordinateCheck& {
    for (auto& w : report.worst_per_group)
      if (w.group == group) return w;
    report.worst_per_group.push_back(CoordinateCheck{group, 0, 0, 0.0, 0.0, -1.0});
    return report.worst_per_group.back();
  };

  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& tensor = params[t];
    if (tensor.shape() != analytic[t].shape()) {
      throw DimensionError("finite_diff_check: gradient shape " + shape_string(analytic[t].shape()) +
                           " vs parameter " + shape_string(tensor.shape()));
    }
    std::vector<std::size_t> coords(tensor.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > options.probes_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.probes_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    CoordinateCheck& worst = worst_slot(groups[t]);
    for (std::size_t index : coords) {
      const double original = tensor[index];
      double eps = options.epsilon;
      bool smooth = false;
      double numeric = 0.0;
      // Shrink the step when a perturbation crosses an activation kink.
      for (int attempt = 0; attempt < 4 && !smooth; ++attempt, eps *= 0.1) {
        tensor[index] = original + eps;
        const ProbeEvaluation plus = detail::evaluate_probe(loss_at);
        tensor[index] = original - eps;
        const ProbeEvaluation minus = detail::evaluate_probe(loss_at);
        tensor[index] = original;
        if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss)) {
          throw NumericError("finite_diff_check: non-finite loss probing " + groups[t] + "[" +
                             std::to_string(index) + "]");
        }
        smooth = plus.kinks == base.kinks && minus.kinks == base.kinks;
        numeric = static_cast<double>((plus.loss - minus.loss) / (2.0L * static_cast<long double>(eps)));
      }
      if (!smooth) {
        ++report.kink_skips;
        continue;
      }
      ++report.probes;
      const double a = analytic[t][index];
      const double err = relative_error(a, numeric, options.magnitude_floor);
      if (err > worst.rel_error) worst = CoordinateCheck{groups[t], t, index, a, numeric, err};
      report.max_rel_error = std::max(report.max_rel_error, err);
    }
  }
  return report;
}

}  // namespace handdi
