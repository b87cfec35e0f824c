#include "nlvos/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "nlvos/error.hpp"

namespace nlvos::eval {

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  int best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k) {
    if (v(k) > v(best)) best = static_cast<int>(k);
  }
  return best;
}

double accuracy(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) throw StructuralError("prediction and label counts differ");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double accuracy(const Eigen::MatrixXd& scores, std::span<const int> truth) {
  if (static_cast<std::size_t>(scores.cols()) != truth.size()) {
    throw StructuralError("prediction and label counts differ");
  }
  std::vector<int> pred(truth.size());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) pred[static_cast<std::size_t>(c)] = argmax(scores.col(c));
  return accuracy(pred, truth);
}

SelectionMetrics selection_metrics(std::span<const std::size_t> selected, const std::vector<bool>& clean_mask) {
  if (clean_mask.empty()) throw ParameterError("selection metrics need a non-empty dataset");
  SelectionMetrics m;
  m.total_clean = static_cast<std::size_t>(std::count(clean_mask.begin(), clean_mask.end(), true));
  m.selected = selected.size();
  for (auto i : selected) {
    if (i >= clean_mask.size()) throw StructuralError("selected position out of range");
    m.selected_clean += clean_mask[i];
  }
  if (m.selected > 0) m.precision = static_cast<double>(m.selected_clean) / static_cast<double>(m.selected);
  m.recall = m.total_clean == 0 ? 0.0
                                : static_cast<double>(m.selected_clean) / static_cast<double>(m.total_clean);
  if (m.precision && (*m.precision + m.recall) > 0.0) {
    m.f1 = 2.0 * *m.precision * m.recall / (*m.precision + m.recall);
  }
  return m;
}

namespace {

void check_scores(const OodScoreSet& s) {
  if (s.id_scores.empty() || s.ood_scores.empty()) throw ParameterError("both score sets must be non-empty");
  for (const auto* v : {&s.id_scores, &s.ood_scores}) {
    for (double x : *v) {
      if (!std::isfinite(x)) throw ParameterError("scores must be finite");
    }
  }
}

}  // namespace

double auroc(const OodScoreSet& scores) {
  check_scores(scores);
  // Rank-sum with average ranks for ties.
  struct Entry {
    double score;
    bool id;
  };
  std::vector<Entry> all;
  all.reserve(scores.id_scores.size() + scores.ood_scores.size());
  for (double s : scores.id_scores) all.push_back({s, true});
  for (double s : scores.ood_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].id) rank_sum += avg_rank;
    }
    i = j;
  }
  const auto n = static_cast<double>(scores.id_scores.size());
  const auto m = static_cast<double>(scores.ood_scores.size());
  return (rank_sum - n * (n + 1.0) / 2.0) / (n * m);
}

double fpr_at_95_tpr(const OodScoreSet& scores) {
  check_scores(scores);
  std::vector<double> id = scores.id_scores;
  std::sort(id.begin(), id.end(), std::greater<>());
  const auto n = id.size();
  // Smallest count of ID samples that reaches 95% recall.
  auto need = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n) - 1e-12));
  need = std::clamp<std::size_t>(need, 1, n);
  const double threshold = id[need - 1];
  std::size_t fp = 0;
  for (double s : scores.ood_scores) fp += s >= threshold;
  return static_cast<double>(fp) / static_cast<double>(scores.ood_scores.size());
}

}  // namespace nlvos::eval
