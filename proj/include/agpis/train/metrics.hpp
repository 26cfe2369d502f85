#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace agpis {

// ROC AUC via the Mann-Whitney rank statistic, ties contribute 1/2
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                                std::to_string(labels.size()) + " labels");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) {
    if (l == 1)
      ++n_pos;
    else if (l == 0)
      ++n_neg;
    else
      throw std::invalid_argument("roc_auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::domain_error("roc_auc: undefined, both classes must be present");

  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });
  // midranks over tie groups
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == 1) rank_sum_pos += rank[k];
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// max recall over thresholds whose precision reaches the target; 0 when no
// threshold qualifies
inline double recall_at_precision(const std::vector<double>& scores,
                                  const std::vector<int>& labels, double target_precision) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("recall_at_precision: size mismatch");
  if (target_precision <= 0.0 || target_precision > 1.0)
    throw std::invalid_argument("recall_at_precision: target must lie in (0, 1]");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw std::domain_error("recall_at_precision: both classes must be present");

  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] > scores[b]; });
  double best_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // advance over a tie group: the threshold admits all equal scores
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) (labels[order[k]] == 1 ? tp : fp)++;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (precision >= target_precision)
      best_recall = std::max(best_recall, static_cast<double>(tp) / static_cast<double>(n_pos));
    i = j + 1;
  }
  return best_recall;
}

struct EvalReport {
  double auc = 0.0;
  double r_at_p80 = 0.0;
  double r_at_p85 = 0.0;
  double r_at_p90 = 0.0;
  // balanced per-category AUC; negative when the subset was empty
  double auc_single = -1.0;
  double auc_pair = -1.0;
  double auc_multi = -1.0;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  long sample_count = 0;
};

}  // namespace agpis
