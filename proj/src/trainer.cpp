#include "nlvos/harness/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "nlvos/error.hpp"
#include "nlvos/eval/metrics.hpp"
#include "nlvos/nn/backward.hpp"
#include "nlvos/nn/losses.hpp"
#include "nlvos/partition/gmm1d.hpp"
#include "nlvos/ssl/objective.hpp"

namespace nlvos::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitStream = 100;
constexpr std::uint64_t kTrainStream = 200;
constexpr std::uint64_t kGeometryStream = 300;

MatrixXd gather(const MatrixXd& x, std::span<const std::size_t> cols) {
  MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(cols[i]));
  return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  // Explicit Fisher-Yates: std::shuffle is not pinned across standard libraries.
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::vector<std::size_t> complement(std::span<const std::size_t> chosen, std::size_t n) {
  std::vector<bool> in(n, false);
  for (std::size_t i : chosen) in[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in[i]) out.push_back(i);
  }
  return out;
}

MatrixXd mean_softmax(std::span<const nn::DenseNetd* const> nets, std::span<const MatrixXd> views) {
  MatrixXd mean;
  int count = 0;
  for (const auto* net : nets) {
    for (const auto& v : views) {
      MatrixXd p = nn::softmax_columns<double>(nn::logits(*net, v));
      mean = count == 0 ? p : MatrixXd(mean + p);
      ++count;
    }
  }
  return mean / static_cast<double>(count);
}

}  // namespace

Augmenter::Augmenter(const MatrixXd& reference) {
  const auto n = static_cast<double>(reference.cols());
  const VectorXd mu = reference.rowwise().mean();
  std_ = ((reference.colwise() - mu).cwiseAbs2().rowwise().sum() / std::max(1.0, n)).cwiseSqrt();
}

MatrixXd Augmenter::weak(const MatrixXd& x, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd out = x;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    for (Eigen::Index j = 0; j < out.rows(); ++j) out(j, c) += jitter * std_(j) * normal(rng);
  }
  return out;
}

MatrixXd Augmenter::strong(const MatrixXd& x, std::mt19937_64& rng) const {
  MatrixXd out = weak(x, rng);
  std::uniform_real_distribution<double> scale(scale_low, scale_high);
  std::bernoulli_distribution drop(dropout);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    for (Eigen::Index j = 0; j < out.rows(); ++j) {
      out(j, c) *= scale(rng);
      if (drop(rng)) out(j, c) = 0.0;
    }
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<double> per_sample_gce(const nn::DenseNetd& net, const data::TrainingView& train, double q) {
  const MatrixXd probs = nn::softmax_columns<double>(nn::logits(net, train.features));
  std::vector<double> out(train.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double p = probs(train.labels[i], static_cast<Eigen::Index>(i));
    out[i] = nn::gce_loss(std::max(p, nn::kProbFloor), q);
  }
  return out;
}

double effective_tau(const RunConfig& config, const geometry::CentroidSet& centroids,
                     const MatrixXd& support_features, std::span<const int> support_labels) {
  double tau = config.tau_rej;
  if (config.tau_auto) {
    if (centroids.means.cols() >= 2) {
      tau = 0.5 * geometry::mean_intercentroid_distance(centroids);
    } else {
      double s = 0.0;
      for (Eigen::Index i = 0; i < support_features.cols(); ++i) {
        s += (support_features.col(i) - *centroids.centroid(support_labels[static_cast<std::size_t>(i)])).norm();
      }
      tau = support_features.cols() > 0 ? s / static_cast<double>(support_features.cols()) : 0.0;
    }
  }
  return tau * config.tau_scale;
}

json to_json(const GeometrySnapshot& s) {
  json centroids = json::array();
  for (std::size_t c = 0; c < s.centroids.classes.size(); ++c) {
    const VectorXd mu = s.centroids.means.col(static_cast<Eigen::Index>(c));
    centroids.push_back({{"class", s.centroids.classes[c]},
                         {"count", s.centroids.counts[c]},
                         {"mean", std::vector<double>(mu.data(), mu.data() + mu.size())}});
  }
  const auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"epoch", s.epoch},
          {"net", s.net},
          {"b_min", vec(s.envelope.lower)},
          {"b_max", vec(s.envelope.upper)},
          {"centroids", centroids},
          {"tau_rej", s.tau_rej},
          {"n_candidates", s.outliers.n_candidates},
          {"n_accepted", s.outliers.n_accepted()},
          {"sampler", geometry::to_string(s.outliers.sampler)}};
}

Trainer::Trainer(RunConfig config, data::TrainingView train)
    : config_(std::move(config)), train_(std::move(train)), augmenter_(train_.features) {
  config_.validate();
  if (train_.features.rows() != config_.input_dim || train_.num_classes != config_.n_classes) {
    throw ConfigError("training data does not match input_dim / n_classes");
  }
  const int count = config_.single_network ? 1 : 2;
  for (int k = 0; k < count; ++k) {
    const auto uk = static_cast<std::uint64_t>(k);
    NetState s;
    s.net = nn::DenseNetd::initialize(config_.net_shape(), derive_seed(config_.seed, kInitStream + uk));
    s.velocity = nn::Velocity<double>::zeros_like(s.net);
    s.train_rng.seed(derive_seed(config_.seed, kTrainStream + uk));
    s.geometry_rng.seed(derive_seed(config_.seed, kGeometryStream + uk));
    s.records = partition::make_records(train_.ids, config_.window);
    nets_.push_back(std::move(s));
  }
}

std::vector<NetEpochRecord> Trainer::warmup_epoch(int epoch) {
  std::vector<NetEpochRecord> out;
  const auto n = train_.size();
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t k = 0; k < nets_.size(); ++k) {
    auto& s = nets_[k];
    NetEpochRecord rec;
    rec.net = static_cast<int>(k);
    auto order = iota(n);
    shuffle(order, s.train_rng);
    double sum = 0.0;
    for (std::size_t b = 0; b * bs < n; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * bs, std::min(bs, n - b * bs));
      const MatrixXd x = augmenter_.weak(gather(train_.features, idx), s.train_rng);
      nn::GradientBundle<double> grads;
      try {
        grads = nn::backward<double>(s.net, x, nn::GceSpec{gather(train_.labels, idx), config_.q},
                                     static_cast<long>(b));
      } catch (const TrainingError& e) {
        throw TrainingError("warm-up epoch " + std::to_string(epoch) + ", net " + std::to_string(k) + ": " +
                            e.what());
      }
      nn::sgd_step(s.net, grads, config_.sgd(), s.velocity);
      sum += grads.loss;
      ++rec.batches;
    }
    rec.losses.gce = rec.batches > 0 ? sum / rec.batches : 0.0;
    rec.losses.total = rec.losses.gce;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::vector<double>> Trainer::warmup(int epochs) {
  for (int e = 0; e < epochs; ++e) warmup_epoch(e);
  std::vector<std::vector<double>> table;
  for (const auto& s : nets_) table.push_back(per_sample_gce(s.net, train_, config_.q));
  return table;
}

std::vector<NetEpochResult> Trainer::train_epoch(int epoch) {
  std::vector<NetEpochResult> out;
  for (std::size_t k = 0; k < nets_.size(); ++k) out.push_back(train_network(k, epoch));
  return out;
}

NetEpochResult Trainer::train_network(std::size_t k, int epoch) {
  auto& self = nets_[k];
  const std::size_t peer_index = nets_.size() == 1 ? k : 1 - k;
  const auto& peer = nets_[peer_index].net;
  const std::size_t n = train_.size();
  NetEpochResult result;
  auto& rec = result.record;
  rec.net = static_cast<int>(k);

  // Co-divide: this network trains on the partition drawn from its peer's losses.
  const auto losses = per_sample_gce(peer, train_, config_.q);
  const auto normalized = partition::min_max_normalize(losses);
  partition::GmmOptions gopt;
  gopt.max_iters = config_.gmm_max_iters;
  gopt.tol = config_.gmm_tol;
  const auto gmm = partition::fit_gmm_1d(normalized, gopt);
  result.partition = partition::partition_epoch(self.records, normalized, gmm, config_.tau_clean);
  const auto& part = result.partition;
  rec.labeled_size = part.labeled.size();
  rec.support_size = part.support.size();

  const bool have_support = !part.support.empty();
  const std::vector<std::size_t>& labeled = have_support ? part.support : part.labeled;
  const std::vector<std::size_t> unlabeled = complement(labeled, n);

  // Geometry on the support features of this network.
  MatrixXd outliers;
  if (have_support) {
    const MatrixXd feats = nn::features(self.net, gather(train_.features, part.support));
    const auto labels = gather(train_.labels, part.support);
    GeometrySnapshot snap;
    snap.epoch = epoch;
    snap.net = static_cast<int>(k);
    snap.envelope = *geometry::estimate_envelope(feats, epoch);
    snap.centroids = geometry::class_centroids(feats, labels, epoch);
    snap.tau_rej = effective_tau(config_, snap.centroids, feats, labels);
    snap.outliers.sampler = config_.sampler_kind();
    rec.geometry_skipped = false;
    rec.envelope_log_volume = snap.envelope.log_volume();
    rec.tau_rej = snap.tau_rej;
    if (!config_.disable_vos) {
      const double want = std::ceil(config_.n_cand_factor * static_cast<double>(part.support.size()));
      const auto n_cand = static_cast<std::size_t>(std::clamp(want, 1.0, static_cast<double>(config_.n_cand_cap)));
      geometry::SamplerOptions sopt;
      sopt.perturbation_scale = config_.perturbation_scale;
      const MatrixXd cands = geometry::sample_candidates(snap.envelope, snap.centroids, feats, labels, n_cand,
                                                         config_.sampler_kind(), self.geometry_rng, sopt);
      snap.outliers = geometry::filter_outliers(cands, snap.centroids, snap.tau_rej, config_.sampler_kind());
      rec.n_candidates = snap.outliers.n_candidates;
      rec.n_outliers_accepted = snap.outliers.n_accepted();
      outliers = snap.outliers.accepted;
    }
    result.geometry = std::move(snap);
  }

  if (labeled.empty()) return result;

  auto lab_order = labeled;
  auto unl_order = unlabeled;
  shuffle(lab_order, self.train_rng);
  shuffle(unl_order, self.train_rng);
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  const std::size_t n_batches = (lab_order.size() + bs - 1) / bs;
  const bool use_spade = !config_.disable_vos && have_support;
  std::vector<const nn::DenseNetd*> voters{&self.net};
  if (peer_index != k) voters.push_back(&peer);

  ssl::ObjectiveOptions opt;
  opt.weights = config_.loss_weights();
  opt.energy_temperature = config_.energy_temperature;
  opt.use_contrastive = !config_.disable_cl;
  opt.use_spade = use_spade;

  std::size_t unl_cursor = 0;
  int energy_batches = 0;
  int outlier_batches = 0;
  double clean_energy = 0.0;
  double outlier_energy = 0.0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const std::span<const std::size_t> li(lab_order.data() + b * bs, std::min(bs, lab_order.size() - b * bs));
    std::vector<std::size_t> ui;
    if (!unl_order.empty()) {
      for (std::size_t i = 0; i < li.size(); ++i) ui.push_back(unl_order[(unl_cursor++) % unl_order.size()]);
    }
    const auto nl = static_cast<Eigen::Index>(li.size());
    const auto nu = static_cast<Eigen::Index>(ui.size());

    const MatrixXd xl = gather(train_.features, li);
    std::vector<MatrixXd> lviews;
    for (int a = 0; a < config_.n_aug; ++a) lviews.push_back(augmenter_.weak(xl, self.train_rng));
    std::vector<double> w;
    for (std::size_t i : li) w.push_back(self.records[i].clean_probability);
    const MatrixXd lab_targets =
        ssl::refine_labels<double>(gather(train_.labels, li), w, mean_softmax(voters, lviews), config_.sharpen_temperature);

    MatrixXd xu(train_.features.rows(), 0);
    std::vector<MatrixXd> uviews;
    MatrixXd unl_targets(train_.num_classes, 0);
    if (nu > 0) {
      xu = gather(train_.features, ui);
      for (int a = 0; a < config_.n_aug; ++a) uviews.push_back(augmenter_.weak(xu, self.train_rng));
      const MatrixXd guess = mean_softmax(voters, uviews);
      unl_targets = ssl::sharpen<double>(guess, config_.sharpen_temperature);
    }

    // MixUp over the concatenated labeled + unlabeled batch with a shuffled partner.
    MatrixXd all_in(train_.features.rows(), nl + nu);
    MatrixXd all_tgt(train_.num_classes, nl + nu);
    if (nu > 0) {
      all_in << lviews[0], uviews[0];
      all_tgt << lab_targets, unl_targets;
    } else {
      all_in = lviews[0];
      all_tgt = lab_targets;
    }
    const double lambda = ssl::sample_mix_coefficient(config_.mixup_alpha, self.train_rng);
    auto perm = iota(static_cast<std::size_t>(nl + nu));
    shuffle(perm, self.train_rng);
    const auto mixed = ssl::mixup<double>(all_in, all_tgt, gather(all_in, perm), gather(all_tgt, perm), lambda);

    ssl::StepBatch<double> batch;
    batch.labeled_inputs = mixed.inputs.leftCols(nl);
    batch.labeled_targets = mixed.targets.leftCols(nl);
    batch.unlabeled_inputs = mixed.inputs.rightCols(nu);
    batch.unlabeled_targets = mixed.targets.rightCols(nu);
    if (opt.use_contrastive && nu > 0) {
      const MatrixXd s1 = augmenter_.strong(xu, self.train_rng);
      const MatrixXd s2 = augmenter_.strong(xu, self.train_rng);
      batch.contrastive_views.resize(xu.rows(), 2 * nu);
      for (Eigen::Index i = 0; i < nu; ++i) {
        batch.contrastive_views.col(2 * i) = s1.col(i);
        batch.contrastive_views.col(2 * i + 1) = s2.col(i);
      }
    }
    if (use_spade) {
      batch.clean_inputs = lviews[0];
      // Outliers for this step come from the geometry stream, without replacement.
      const auto m = std::min<std::size_t>(bs, static_cast<std::size_t>(outliers.cols()));
      auto pick = iota(static_cast<std::size_t>(outliers.cols()));
      for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, pick.size() - 1);
        std::swap(pick[i], pick[d(self.geometry_rng)]);
      }
      pick.resize(m);
      batch.outliers = gather(outliers, pick);
    }

    // lambda_u ramps linearly from the end of warm-up.
    const double progress = (epoch - config_.warmup_epochs) + static_cast<double>(b) / static_cast<double>(n_batches);
    opt.weights.lambda_u = config_.lambda_u * std::clamp(progress / config_.lambda_u_rampup, 0.0, 1.0);

    auto grads = nn::GradientBundle<double>::zeros_like(self.net);
    ssl::LossBreakdown terms;
    try {
      terms = ssl::total_objective(self.net, batch, opt, &grads);
    } catch (const TrainingError& e) {
      throw TrainingError("epoch " + std::to_string(epoch) + ", net " + std::to_string(k) + ", batch " +
                          std::to_string(b) + ": " + e.what());
    }
    if (b == 0) rec.first_batch = terms;
    nn::sgd_step(self.net, grads, config_.sgd(), self.velocity);

    rec.losses.l_x += terms.l_x;
    rec.losses.l_u += terms.l_u;
    rec.losses.l_reg += terms.l_reg;
    rec.losses.ssl += terms.ssl;
    rec.losses.cl += terms.cl;
    rec.losses.spade += terms.spade;
    rec.losses.total += terms.total;
    if (terms.spade_active) {
      clean_energy += terms.mean_clean_energy;
      ++energy_batches;
      if (batch.outliers.cols() > 0) {
        outlier_energy += terms.mean_outlier_energy;
        ++outlier_batches;
      }
    }
    ++rec.batches;
  }
  const double nb = static_cast<double>(rec.batches);
  for (double* v : {&rec.losses.l_x, &rec.losses.l_u, &rec.losses.l_reg, &rec.losses.ssl, &rec.losses.cl,
                    &rec.losses.spade, &rec.losses.total}) {
    *v /= nb;
  }
  if (energy_batches > 0) rec.mean_clean_energy = clean_energy / energy_batches;
  if (outlier_batches > 0) rec.mean_outlier_energy = outlier_energy / outlier_batches;
  return result;
}

MatrixXd Trainer::predict(const MatrixXd& x) const {
  MatrixXd mean = MatrixXd::Zero(train_.num_classes, x.cols());
  for (const auto& s : nets_) mean += nn::softmax_columns<double>(nn::logits(s.net, x));
  return mean / static_cast<double>(nets_.size());
}

VectorXd Trainer::energy(const MatrixXd& x) const {
  VectorXd mean = VectorXd::Zero(x.cols());
  for (const auto& s : nets_) {
    mean += nn::energy_batch<double>(nn::logits(s.net, x), config_.energy_temperature).values;
  }
  return mean / static_cast<double>(nets_.size());
}

std::vector<double> ood_scores(const std::vector<nn::DenseNetd>& nets, const MatrixXd& x, double temperature) {
  if (nets.empty()) throw ParameterError("ood scoring needs at least one network");
  VectorXd mean = VectorXd::Zero(x.cols());
  for (const auto& net : nets) mean += nn::energy_batch<double>(nn::logits(net, x), temperature).values;
  mean /= static_cast<double>(nets.size());
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -mean(static_cast<Eigen::Index>(i));
  return out;
}

json net_to_json(const nn::DenseNetd& net) {
  const auto layer_json = [&](nn::LayerRange r) {
    json arr = json::array();
    for (std::size_t i = r.begin; i < r.end; ++i) {
      const auto& l = net.layers()[i];
      json w = json::array();
      for (Eigen::Index row = 0; row < l.weights.rows(); ++row) {
        const Eigen::VectorXd v = l.weights.row(row).transpose();
        w.push_back(std::vector<double>(v.data(), v.data() + v.size()));
      }
      arr.push_back({{"activation", l.activation == nn::Activation::relu ? "relu" : "identity"},
                     {"weights", w},
                     {"biases", std::vector<double>(l.biases.data(), l.biases.data() + l.biases.size())}});
    }
    return arr;
  };
  return {{"extractor", layer_json(net.extractor_range())},
          {"classifier", layer_json(net.classifier_range())},
          {"projector", layer_json(net.projector_range())}};
}

nn::DenseNetd net_from_json(const json& doc) {
  const auto layers = [&](const char* key) {
    std::vector<nn::DenseLayer<double>> out;
    for (const auto& l : doc.at(key)) {
      nn::DenseLayer<double> layer;
      const auto act = l.at("activation").get<std::string>();
      if (act != "relu" && act != "identity") throw IoError("unknown activation " + act);
      layer.activation = act == "relu" ? nn::Activation::relu : nn::Activation::identity;
      const auto rows = l.at("weights").get<std::vector<std::vector<double>>>();
      const auto bias = l.at("biases").get<std::vector<double>>();
      const auto cols = rows.empty() ? std::size_t{0} : rows.front().size();
      layer.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw IoError("ragged weight matrix in model file");
        for (std::size_t c = 0; c < cols; ++c) layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
      layer.biases = Eigen::Map<const VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
      out.push_back(std::move(layer));
    }
    return out;
  };
  try {
    return nn::DenseNetd(layers("extractor"), layers("classifier"), layers("projector"));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed model file: ") + e.what());
  } catch (const StructuralError& e) {
    throw IoError(std::string("inconsistent model file: ") + e.what());
  }
}

void save_model(const std::string& path, const std::vector<nn::DenseNetd>& nets, double temperature) {
  json doc{{"energy_temperature", temperature}, {"nets", json::array()}};
  for (const auto& net : nets) doc["nets"].push_back(net_to_json(net));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model " + path);
  out << std::setprecision(17) << doc.dump() << "\n";
}

std::vector<nn::DenseNetd> load_model(const std::string& path, double* temperature) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(std::string("model file is not valid JSON: ") + e.what());
  }
  std::vector<nn::DenseNetd> nets;
  try {
    for (const auto& n : doc.at("nets")) nets.push_back(net_from_json(n));
    if (temperature) *temperature = doc.at("energy_temperature").get<double>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed model file: ") + e.what());
  }
  if (nets.empty()) throw IoError("model file holds no networks");
  return nets;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

SelectionScores to_scores(const eval::SelectionMetrics& m) { return {m.precision, m.recall, m.f1}; }

void write_feature_export(const fs::path& path, const MatrixXd& features, std::span<const int> ids,
                          std::span<const std::size_t> support, const MatrixXd& outliers) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17) << "id,split";
  for (Eigen::Index j = 0; j < features.rows(); ++j) out << ",f" << j;
  out << "\n";
  std::vector<bool> in_support(static_cast<std::size_t>(features.cols()), false);
  for (std::size_t i : support) in_support[i] = true;
  const auto row = [&](auto id, const char* split, const auto& col) {
    out << id << "," << split;
    for (Eigen::Index j = 0; j < col.size(); ++j) out << "," << col(j);
    out << "\n";
  };
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    row(ids[static_cast<std::size_t>(i)], in_support[static_cast<std::size_t>(i)] ? "clean" : "noisy", features.col(i));
  }
  for (Eigen::Index i = 0; i < outliers.cols(); ++i) row(i, "outlier", outliers.col(i));
}

}  // namespace

RunReport run_experiment(const RunConfig& config, const RunOutputs& outputs) {
  using Clock = std::chrono::steady_clock;
  const auto started = Clock::now();
  config.validate();
  RunReport report;
  report.config = config;
  const bool files = !outputs.out_dir.empty();
  const fs::path dir(outputs.out_dir);
  json timing{{"epochs", json::array()}};

  const auto write_report = [&] {
    if (!files) return;
    write_text(dir / "report.json", serialize(report));
    timing["wall_clock_seconds"] = std::chrono::duration<double>(Clock::now() - started).count();
    write_text(dir / "timing.json", timing.dump(2) + "\n");
  };

  try {
    if (files) {
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
      write_text(dir / "config.json", to_json(config).dump(2) + "\n");
      if (config.dump_geometry_json) fs::create_directories(dir / "geometry");
      if (config.export_features) fs::create_directories(dir / "features");
    }

    const auto clean = data::generate(config.train_spec(), 0);
    const auto train = data::inject_noise(clean, config.noise_spec());
    const auto test = data::generate(config.test_spec(), 1);
    const auto clean_mask = train.clean_mask();

    Trainer trainer(config, train.training());
    std::vector<std::ofstream> selection_csv;
    if (files && config.dump_selection_csv) {
      for (std::size_t k = 0; k < trainer.nets().size(); ++k) {
        selection_csv.emplace_back(dir / ("selection_net" + std::to_string(k) + ".csv"));
        if (!selection_csv.back()) throw IoError("cannot write selection dump");
        selection_csv.back() << std::setprecision(17);
      }
    }

    for (int e = 0; e < config.epochs; ++e) {
      const auto epoch_started = Clock::now();
      EpochRecord rec;
      rec.epoch = e;
      if (e < config.warmup_epochs) {
        rec.phase = "warmup";
        rec.nets = trainer.warmup_epoch(e);
      } else {
        rec.phase = "train";
        auto results = trainer.train_epoch(e);
        for (std::size_t k = 0; k < results.size(); ++k) {
          auto& r = results[k];
          r.record.labeled_selection = to_scores(eval::selection_metrics(r.partition.labeled, clean_mask));
          r.record.support_selection = to_scores(eval::selection_metrics(r.partition.support, clean_mask));
          if (!selection_csv.empty()) {
            partition::write_selection_csv(selection_csv[k], e, trainer.nets()[k].records, r.partition.support,
                                           e == config.warmup_epochs);
          }
          if (files && config.dump_geometry_json && r.geometry) {
            write_text(dir / "geometry" / ("epoch_" + std::to_string(e) + "_net" + std::to_string(k) + ".json"),
                       to_json(*r.geometry).dump(2) + "\n");
          }
          rec.nets.push_back(r.record);
        }
        if (files && config.export_features && (e - config.warmup_epochs) % config.export_every == 0) {
          const auto& r = results.front();
          write_feature_export(dir / "features" / ("epoch_" + std::to_string(e) + ".csv"),
                               nn::features(trainer.nets().front().net, train.features()), train.ids(),
                               r.partition.support, r.geometry ? r.geometry->outliers.accepted : MatrixXd());
        }
      }
      rec.test_accuracy = eval::accuracy(trainer.predict(test.features()), test.true_labels());
      report.epochs.push_back(std::move(rec));
      timing["epochs"].push_back(std::chrono::duration<double>(Clock::now() - epoch_started).count());
    }

    auto& s = report.summary;
    for (const auto& r : report.epochs) s.best_accuracy = std::max(s.best_accuracy, r.test_accuracy);
    if (!report.epochs.empty()) {
      s.final_accuracy = report.epochs.back().test_accuracy;
      s.final_support_f1 = report.epochs.back().support_selection().f1;
    }

    std::vector<nn::DenseNetd> nets;
    for (const auto& n : trainer.nets()) nets.push_back(n.net);
    const auto id_scores = ood_scores(nets, test.features(), config.energy_temperature);
    for (const auto regime : {data::OodRegime::far, data::OodRegime::near}) {
      const auto ood = data::generate_ood(config.ood_spec(), clean, regime);
      const eval::OodScoreSet set{id_scores, ood_scores(nets, ood.features, config.energy_temperature)};
      const OodMetrics m{eval::auroc(set), eval::fpr_at_95_tpr(set)};
      (regime == data::OodRegime::far ? s.far : s.near) = m;
    }
    if (files) save_model((dir / "model.json").string(), nets, config.energy_temperature);
    report.complete = true;
    write_report();
  } catch (const std::exception& e) {
    report.complete = false;
    report.error = e.what();
    try {
      write_report();
    } catch (const std::exception&) {
      // The original error is the one worth reporting.
    }
    throw;
  }
  return report;
}

}  // namespace nlvos::harness
