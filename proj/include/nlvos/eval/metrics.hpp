#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace nlvos::eval {

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Fraction of predicted labels equal to the true labels.
double accuracy(std::span<const int> predictions, std::span<const int> truth);

/// Accuracy of the column-wise argmax of a K x n probability (or logit) matrix.
double accuracy(const Eigen::MatrixXd& scores, std::span<const int> truth);

struct SelectionMetrics {
  std::optional<double> precision;  // empty when nothing was selected
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t selected = 0;
  std::size_t selected_clean = 0;
  std::size_t total_clean = 0;
};

/// Positive class = "noisy label equals true label". `selected` holds
/// positions into `clean_mask`.
SelectionMetrics selection_metrics(std::span<const std::size_t> selected, const std::vector<bool>& clean_mask);

/// ID scores should rank above OOD scores; score = -energy.
struct OodScoreSet {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

/// Mann-Whitney estimate of P(id > ood) + 0.5 P(id = ood).
double auroc(const OodScoreSet& scores);

/// FPR at the most stringent observed threshold t with TPR(score >= t) >= 0.95.
double fpr_at_95_tpr(const OodScoreSet& scores);

}  // namespace nlvos::eval
