#pragma once

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <vector>

#include "json.hpp"

#include "nlvos/data/dataset.hpp"
#include "nlvos/geometry/geometry.hpp"
#include "nlvos/harness/config.hpp"
#include "nlvos/harness/report.hpp"
#include "nlvos/nn/propagation.hpp"
#include "nlvos/partition/selection.hpp"

namespace nlvos::harness {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Vector-data stand-ins for image augmentations. Jitter is scaled by the
/// per-dimension standard deviation of the reference set.
class Augmenter {
 public:
  Augmenter() = default;
  explicit Augmenter(const MatrixXd& reference);

  /// x + N(0, (jitter * std_j)^2)
  MatrixXd weak(const MatrixXd& x, std::mt19937_64& rng) const;
  /// weak, then a per-dimension scale from U[scale_low, scale_high] and
  /// dimension dropout with probability `dropout`.
  MatrixXd strong(const MatrixXd& x, std::mt19937_64& rng) const;

  const VectorXd& feature_std() const { return std_; }

  double jitter = 0.05;
  double scale_low = 0.8;
  double scale_high = 1.25;
  double dropout = 0.1;

 private:
  VectorXd std_;
};

/// One of the dual networks with its optimizer state, RNG streams and
/// per-sample selection history. The geometry stream is separate so that
/// switching outlier synthesis off leaves the training stream untouched.
struct NetState {
  nn::DenseNetd net;
  nn::Velocity<double> velocity;
  std::mt19937_64 train_rng;
  std::mt19937_64 geometry_rng;
  std::vector<partition::LossRecord> records;
};

/// Deterministic sub-seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Per-sample GCE loss of `net` on every training sample (no augmentation).
std::vector<double> per_sample_gce(const nn::DenseNetd& net, const data::TrainingView& train, double q);

/// Rejection radius actually used: 0.5 x mean inter-centroid distance when
/// tau_auto (mean support-to-centroid distance with a single class), else
/// tau_rej; times tau_scale.
double effective_tau(const RunConfig& config, const geometry::CentroidSet& centroids,
                     const MatrixXd& support_features, std::span<const int> support_labels);

struct GeometrySnapshot {
  int epoch = 0;
  int net = 0;
  geometry::Envelope envelope;
  geometry::CentroidSet centroids;
  geometry::OutlierBatch outliers;
  double tau_rej = 0;
};

nlohmann::json to_json(const GeometrySnapshot& snapshot);

/// Output of one network's share of a training epoch. Selection scores in the
/// record are left for the caller, who alone holds the true labels.
struct NetEpochResult {
  NetEpochRecord record;
  partition::Partition partition;
  std::optional<GeometrySnapshot> geometry;
};

/// Runs the dual-network pipeline on a training view that carries noisy
/// labels only.
class Trainer {
 public:
  Trainer(RunConfig config, data::TrainingView train);

  const RunConfig& config() const { return config_; }
  const data::TrainingView& training() const { return train_; }
  std::vector<NetState>& nets() { return nets_; }
  const std::vector<NetState>& nets() const { return nets_; }

  /// `epochs` GCE epochs on all noisy data, each network on its own. Returns
  /// the final per-sample GCE table, one row per network.
  std::vector<std::vector<double>> warmup(int epochs);
  std::vector<NetEpochRecord> warmup_epoch(int epoch);

  /// Co-divide, geometry and the semi-supervised step for every network.
  std::vector<NetEpochResult> train_epoch(int epoch);

  /// Mean softmax of all networks (K x n).
  MatrixXd predict(const MatrixXd& x) const;
  /// Mean energy of all networks, one per column.
  VectorXd energy(const MatrixXd& x) const;

 private:
  NetEpochResult train_network(std::size_t k, int epoch);

  RunConfig config_;
  data::TrainingView train_;
  Augmenter augmenter_;
  std::vector<NetState> nets_;
};

/// Where run_experiment writes its files. An empty directory means no files.
struct RunOutputs {
  std::string out_dir;
};

/// Full pipeline: data, warm-up, all epochs, final OOD evaluation. With an
/// output directory it writes report.json, config.json, timing.json,
/// model.json and the optional dumps. On failure the partial report is
/// written with complete = false and the error is rethrown.
RunReport run_experiment(const RunConfig& config, const RunOutputs& outputs = {});

// Model files hold every network of a run plus the energy temperature.
nlohmann::json net_to_json(const nn::DenseNetd& net);
nn::DenseNetd net_from_json(const nlohmann::json& doc);
void save_model(const std::string& path, const std::vector<nn::DenseNetd>& nets, double temperature);
std::vector<nn::DenseNetd> load_model(const std::string& path, double* temperature = nullptr);

/// -mean energy over networks: higher means more in-distribution.
std::vector<double> ood_scores(const std::vector<nn::DenseNetd>& nets, const MatrixXd& x, double temperature);

}  // namespace nlvos::harness
