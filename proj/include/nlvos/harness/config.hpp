#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "nlvos/data/dataset.hpp"
#include "nlvos/geometry/geometry.hpp"
#include "nlvos/nn/dense_net.hpp"
#include "nlvos/ssl/objective.hpp"

namespace nlvos::harness {

/// Every knob of one experiment. Keys in the JSON form match the member names.
struct RunConfig {
  // data
  std::string generator = "gaussian-blobs";
  int n_train = 2000;
  int n_test = 1000;
  int n_classes = 4;
  int input_dim = 8;
  double separation = 3.0;
  std::string noise_mode = "symmetric";
  double noise_rate = 0.4;
  int n_ood = 1000;

  // model
  std::vector<int> hidden = {64, 64};
  int projection_dim = 32;

  // selection
  double q = 0.7;
  double tau_clean = 0.5;
  int window = 3;
  int gmm_max_iters = 100;
  double gmm_tol = 1e-8;

  // geometry
  double tau_rej = 2.5;
  bool tau_auto = false;
  double tau_scale = 1.0;
  std::string sampler = "uniform";
  double n_cand_factor = 10.0;
  int n_cand_cap = 10000;
  double perturbation_scale = 0.1;

  // energy and semi-supervised losses
  double energy_temperature = 1.0;
  double sharpen_temperature = 0.5;
  double mixup_alpha = 4.0;
  double contrastive_temperature = 0.5;
  int n_aug = 2;
  double lambda_u = 30.0;
  int lambda_u_rampup = 16;
  double lambda_reg = 1.0;
  double lambda_cl = 1.0;
  double lambda_spade = 0.1;

  // optimization
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 64;
  int warmup_epochs = 10;
  int epochs = 40;  // total, warm-up included

  // run
  std::uint64_t seed = 1;
  bool disable_vos = false;
  bool disable_cl = false;
  bool single_network = false;
  bool dump_selection_csv = false;
  bool dump_geometry_json = false;
  bool export_features = false;
  int export_every = 1;

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  data::SyntheticSpec train_spec() const;
  data::SyntheticSpec test_spec() const;
  data::NoiseSpec noise_spec() const;
  data::OodSpec ood_spec() const;
  nn::NetShape net_shape() const;
  geometry::Sampler sampler_kind() const;
  nn::SgdOptions sgd() const;
  ssl::LossWeights loss_weights() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Applies `doc` over the defaults; unknown keys and bad types are ConfigErrors.
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});
RunConfig load_config(const std::string& path);

}  // namespace nlvos::harness
