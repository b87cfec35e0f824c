#include "nlvos/harness/config.hpp"

#include <fstream>
#include <set>

#include "nlvos/error.hpp"

namespace nlvos::harness {

using nlohmann::json;

namespace {

template <typename Config, typename F>
void visit_fields(Config& c, F&& f) {
  f("generator", c.generator);
  f("n_train", c.n_train);
  f("n_test", c.n_test);
  f("n_classes", c.n_classes);
  f("input_dim", c.input_dim);
  f("separation", c.separation);
  f("noise_mode", c.noise_mode);
  f("noise_rate", c.noise_rate);
  f("n_ood", c.n_ood);
  f("hidden", c.hidden);
  f("projection_dim", c.projection_dim);
  f("q", c.q);
  f("tau_clean", c.tau_clean);
  f("window", c.window);
  f("gmm_max_iters", c.gmm_max_iters);
  f("gmm_tol", c.gmm_tol);
  f("tau_rej", c.tau_rej);
  f("tau_auto", c.tau_auto);
  f("tau_scale", c.tau_scale);
  f("sampler", c.sampler);
  f("n_cand_factor", c.n_cand_factor);
  f("n_cand_cap", c.n_cand_cap);
  f("perturbation_scale", c.perturbation_scale);
  f("energy_temperature", c.energy_temperature);
  f("sharpen_temperature", c.sharpen_temperature);
  f("mixup_alpha", c.mixup_alpha);
  f("contrastive_temperature", c.contrastive_temperature);
  f("n_aug", c.n_aug);
  f("lambda_u", c.lambda_u);
  f("lambda_u_rampup", c.lambda_u_rampup);
  f("lambda_reg", c.lambda_reg);
  f("lambda_cl", c.lambda_cl);
  f("lambda_spade", c.lambda_spade);
  f("lr", c.lr);
  f("momentum", c.momentum);
  f("weight_decay", c.weight_decay);
  f("batch_size", c.batch_size);
  f("warmup_epochs", c.warmup_epochs);
  f("epochs", c.epochs);
  f("seed", c.seed);
  f("disable_vos", c.disable_vos);
  f("disable_cl", c.disable_cl);
  f("single_network", c.single_network);
  f("dump_selection_csv", c.dump_selection_csv);
  f("dump_geometry_json", c.dump_geometry_json);
  f("export_features", c.export_features);
  f("export_every", c.export_every);
}

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

}  // namespace

void RunConfig::validate() const {
  if (!data::parse_generator(generator)) bad("generator", "unknown generator " + generator);
  if (!data::parse_noise_mode(noise_mode)) bad("noise_mode", "expected symmetric or asymmetric");
  if (!geometry::parse_sampler(sampler)) bad("sampler", "expected uniform, gaussian, perturbation or hybrid");
  if (n_classes < 2) bad("n_classes", "must be >= 2");
  if (n_train < n_classes) bad("n_train", "must be >= n_classes");
  if (n_test < 1) bad("n_test", "must be positive");
  if (input_dim < 1) bad("input_dim", "must be positive");
  if (!(separation > 0)) bad("separation", "must be positive");
  if (!(noise_rate >= 0 && noise_rate < 1)) bad("noise_rate", "must lie in [0, 1)");
  if (n_ood < 1) bad("n_ood", "must be positive");
  if (hidden.empty()) bad("hidden", "needs at least one layer");
  for (int h : hidden) {
    if (h < 1) bad("hidden", "widths must be positive");
  }
  if (projection_dim < 1) bad("projection_dim", "must be positive");
  if (!(q > 0 && q <= 1)) bad("q", "must lie in (0, 1]");
  if (!(tau_clean > 0 && tau_clean < 1)) bad("tau_clean", "must lie in (0, 1)");
  if (window < 1) bad("window", "must be >= 1");
  if (gmm_max_iters < 1) bad("gmm_max_iters", "must be >= 1");
  if (!(gmm_tol > 0)) bad("gmm_tol", "must be positive");
  if (!(tau_rej >= 0)) bad("tau_rej", "must be nonnegative");
  if (!(tau_scale > 0)) bad("tau_scale", "must be positive");
  if (!(n_cand_factor > 0)) bad("n_cand_factor", "must be positive");
  if (n_cand_cap < 1) bad("n_cand_cap", "must be positive");
  if (!(perturbation_scale >= 0)) bad("perturbation_scale", "must be nonnegative");
  if (!(energy_temperature > 0)) bad("energy_temperature", "must be positive");
  if (!(sharpen_temperature > 0)) bad("sharpen_temperature", "must be positive");
  if (!(mixup_alpha > 0)) bad("mixup_alpha", "must be positive");
  if (!(contrastive_temperature > 0)) bad("contrastive_temperature", "must be positive");
  if (n_aug < 1) bad("n_aug", "must be >= 1");
  if (lambda_u_rampup < 1) bad("lambda_u_rampup", "must be >= 1");
  const std::pair<const char*, double> weights[] = {{"lambda_u", lambda_u},
                                                    {"lambda_reg", lambda_reg},
                                                    {"lambda_cl", lambda_cl},
                                                    {"lambda_spade", lambda_spade},
                                                    {"momentum", momentum},
                                                    {"weight_decay", weight_decay}};
  for (const auto& [name, v] : weights) {
    if (!(v >= 0)) bad(name, "must be nonnegative");
  }
  if (!(lr > 0)) bad("lr", "must be positive");
  if (batch_size < 1) bad("batch_size", "must be positive");
  if (warmup_epochs < 0) bad("warmup_epochs", "must be nonnegative");
  if (epochs < warmup_epochs) bad("epochs", "must be >= warmup_epochs");
  if (export_every < 1) bad("export_every", "must be >= 1");
}

data::SyntheticSpec RunConfig::train_spec() const {
  return {*data::parse_generator(generator), n_train, n_classes, input_dim, separation, seed};
}

data::SyntheticSpec RunConfig::test_spec() const {
  auto s = train_spec();
  s.n_samples = n_test;
  return s;
}

data::NoiseSpec RunConfig::noise_spec() const { return {*data::parse_noise_mode(noise_mode), noise_rate, seed}; }

data::OodSpec RunConfig::ood_spec() const {
  data::OodSpec s;
  s.n_samples = n_ood;
  s.seed = seed;
  return s;
}

nn::NetShape RunConfig::net_shape() const { return {input_dim, hidden, n_classes, projection_dim}; }

geometry::Sampler RunConfig::sampler_kind() const { return *geometry::parse_sampler(sampler); }

nn::SgdOptions RunConfig::sgd() const { return {lr, momentum, weight_decay}; }

ssl::LossWeights RunConfig::loss_weights() const {
  return {lambda_u, lambda_reg, lambda_cl, lambda_spade, contrastive_temperature, sharpen_temperature};
}

json to_json(const RunConfig& config) {
  json j = json::object();
  visit_fields(config, [&j](const char* key, const auto& value) { j[key] = value; });
  return j;
}

RunConfig config_from_json(const json& doc, RunConfig base) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  std::set<std::string> known;
  visit_fields(base, [&known](const char* key, auto&) { known.insert(key); });
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  visit_fields(base, [&doc](const char* key, auto& value) {
    const auto it = doc.find(key);
    if (it == doc.end()) return;
    using T = std::decay_t<decltype(value)>;
    const bool ok = [&] {
      if constexpr (std::is_same_v<T, bool>) return it->is_boolean();
      else if constexpr (std::is_same_v<T, std::string>) return it->is_string();
      else if constexpr (std::is_same_v<T, std::vector<int>>) return it->is_array();
      else if constexpr (std::is_floating_point_v<T>) return it->is_number();
      else if constexpr (std::is_unsigned_v<T>) return it->is_number_unsigned();
      else return it->is_number_integer();
    }();
    if (!ok) bad(key, "wrong type");
    try {
      value = it->template get<T>();
    } catch (const json::exception& e) {
      bad(key, e.what());
    }
  });
  base.validate();
  return base;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

}  // namespace nlvos::harness
