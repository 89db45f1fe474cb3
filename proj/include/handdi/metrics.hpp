#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "handdi/errors.hpp"
#include "handdi/io.hpp"

namespace handdi {

/// Area under the ROC curve as the Mann-Whitney statistic with average ranks
/// for tied scores. Labels are 0/1; both classes must be present.
template <class S, class L>
double auroc(std::span<const S> scores, std::span<const L> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double average_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != L{0}) {
        positive_rank_sum += average_rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw ContractError("auroc: undefined unless both classes are present");
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auroc;  // absent for single-class label sets
  double threshold = 0.5;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  /// One `name <TAB> value` line per metric.
  std::string to_text() const {
    std::ostringstream os;
    os << "precision\t" << io::format_number(precision) << '\n'
       << "recall\t" << io::format_number(recall) << '\n'
       << "f1\t" << io::format_number(f1) << '\n'
       << "auroc\t" << (auroc ? io::format_number(*auroc) : std::string("NA")) << '\n'
       << "threshold\t" << io::format_number(threshold) << '\n'
       << "tp\t" << tp << '\n'
       << "fp\t" << fp << '\n'
       << "tn\t" << tn << '\n'
       << "fn\t" << fn << '\n';
    return os.str();
  }
};

/// Confusion counts at `threshold` (score > threshold predicts positive),
/// precision/recall/F1 with 0 for empty denominators, and AUROC when defined.
template <class S, class L>
Metrics evaluate(std::span<const S> scores, std::span<const L> labels, double threshold = 0.5) {
  if (scores.size() != labels.size()) throw DimensionError("evaluate: scores and labels differ in length");
  Metrics m;
  m.threshold = threshold;
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = static_cast<double>(scores[i]);
    if (!(s >= 0.0 && s <= 1.0)) throw ContractError("evaluate: score outside [0, 1]");
    const bool actual = labels[i] != L{0};
    if (labels[i] != L{0} && labels[i] != L{1}) throw ContractError("evaluate: label is not 0 or 1");
    const bool predicted = s > threshold;
    has_pos = has_pos || actual;
    has_neg = has_neg || !actual;
    if (predicted && actual) ++m.tp;
    else if (predicted) ++m.fp;
    else if (actual) ++m.fn;
    else ++m.tn;
  }
  const double tp = static_cast<double>(m.tp);
  m.precision = (m.tp + m.fp) ? tp / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) ? tp / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  if (has_pos && has_neg) m.auroc = auroc(scores, labels);
  return m;
}

}  // namespace handdi
