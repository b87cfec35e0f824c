#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nlvos/harness/config.hpp"

namespace nlvos::harness {

inline constexpr int kReportSchemaVersion = 1;

struct LossMeans {
  double gce = 0, l_x = 0, l_u = 0, l_reg = 0, ssl = 0, cl = 0, spade = 0, total = 0;
};

struct SelectionScores {
  std::optional<double> precision;
  double recall = 0, f1 = 0;
};

/// What one network did during one epoch.
struct NetEpochRecord {
  int net = 0;
  LossMeans losses;
  int batches = 0;
  std::size_t labeled_size = 0;  // |X_t|
  std::size_t support_size = 0;  // |X_support|
  SelectionScores labeled_selection;
  SelectionScores support_selection;
  bool geometry_skipped = true;
  std::optional<double> envelope_log_volume;
  std::optional<double> tau_rej;
  std::size_t n_candidates = 0;
  std::size_t n_outliers_accepted = 0;
  std::optional<double> mean_clean_energy;
  std::optional<double> mean_outlier_energy;
  /// Loss decomposition of the first optimization step, before any update.
  std::optional<ssl::LossBreakdown> first_batch;
};

struct EpochRecord {
  int epoch = 0;
  std::string phase;  // "warmup" or "train"
  std::vector<NetEpochRecord> nets;
  double test_accuracy = 0;

  // Means over networks.
  LossMeans losses() const;
  double labeled_size() const;
  double support_size() const;
  SelectionScores labeled_selection() const;
  SelectionScores support_selection() const;
  std::optional<double> envelope_log_volume() const;
  double n_outliers_accepted() const;
  std::optional<double> mean_clean_energy() const;
  std::optional<double> mean_outlier_energy() const;
};

struct OodMetrics {
  double auroc = 0;
  double fpr95 = 0;
};

struct RunSummary {
  double best_accuracy = 0;
  double final_accuracy = 0;
  double final_support_f1 = 0;
  std::optional<OodMetrics> far;
  std::optional<OodMetrics> near;
};

struct RunReport {
  RunConfig config;
  std::vector<EpochRecord> epochs;
  RunSummary summary;
  bool complete = false;
  std::string error;
};

nlohmann::json to_json(const EpochRecord& record);
nlohmann::json to_json(const RunReport& report);
/// Canonical serialization; equal reports give equal bytes.
std::string serialize(const RunReport& report);

/// Structural check of an emitted report. Returns one message per problem.
std::vector<std::string> validate_report(const nlohmann::json& doc);

}  // namespace nlvos::harness
