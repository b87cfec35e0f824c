// Command-line front end: gen-data, train, ood-eval, ablate, export-features.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "nlvos/data/dataset.hpp"
#include "nlvos/error.hpp"
#include "nlvos/eval/metrics.hpp"
#include "nlvos/harness/ablation.hpp"
#include "nlvos/harness/config.hpp"
#include "nlvos/harness/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace nlvos;

enum ExitCode { kOk = 0, kConfig = 2, kTraining = 3, kIo = 4 };

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "run";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config; missing keys take their defaults");
  cmd->add_option("--seed", f.seed, "Override the config seed");
  cmd->add_option("--out-dir", f.out_dir, "Output directory")->capture_default_str();
}

harness::RunConfig base_config(const CommonFlags& f) {
  harness::RunConfig c = f.config_path.empty() ? harness::RunConfig{} : harness::load_config(f.config_path);
  if (f.seed) c.seed = *f.seed;
  return c;
}

data::LabeledDataset noisy_train(const harness::RunConfig& c) {
  return data::inject_noise(data::generate(c.train_spec(), 0), c.noise_spec());
}

// Dataset CSVs carry label columns; plain feature CSVs do not.
Eigen::MatrixXd read_any_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header.rfind("id,true_label,noisy_label", 0) == 0) return data::load_dataset(path).features();
  return data::load_features(path);
}

void print_summary(const harness::RunReport& r) {
  std::cout << "final_accuracy " << r.summary.final_accuracy << "\n"
            << "best_accuracy " << r.summary.best_accuracy << "\n"
            << "final_support_f1 " << r.summary.final_support_f1 << "\n";
  if (r.summary.far) std::cout << "far_auroc " << r.summary.far->auroc << " far_fpr95 " << r.summary.far->fpr95 << "\n";
  if (r.summary.near) {
    std::cout << "near_auroc " << r.summary.near->auroc << " near_fpr95 " << r.summary.near->fpr95 << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noisy-label learning with geometry-aware virtual outliers on synthetic data"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen-data", "Write train/test/OOD CSV files");
  add_common(gen, gen_flags);

  CommonFlags train_flags;
  bool disable_vos = false, disable_cl = false, tau_auto = false;
  std::optional<std::string> sampler;
  std::optional<double> tau_rej;
  auto* train = app.add_subcommand("train", "Run one experiment");
  add_common(train, train_flags);
  train->add_flag("--disable-vos", disable_vos, "Turn off virtual outlier synthesis");
  train->add_flag("--disable-cl", disable_cl, "Turn off the contrastive term");
  train->add_option("--sampler", sampler, "Candidate sampler")
      ->check(CLI::IsMember({"uniform", "gaussian", "perturbation", "hybrid"}));
  train->add_option("--tau-rej", tau_rej, "Rejection radius in feature units");
  train->add_flag("--tau-auto", tau_auto, "Rejection radius = 0.5 x mean inter-centroid distance");

  std::string model_path, id_path;
  std::vector<std::string> ood_paths;
  auto* ood = app.add_subcommand("ood-eval", "Score a saved model against OOD feature files");
  ood->add_option("--model", model_path, "model.json written by train")->required();
  ood->add_option("--id", id_path, "In-distribution CSV (dataset or features)")->required();
  ood->add_option("--ood", ood_paths, "One or more OOD feature CSVs")->required();

  CommonFlags ablate_flags;
  std::string grid = "vos";
  int n_seeds = 5;
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid and write comparison.csv");
  add_common(ablate, ablate_flags);
  ablate->add_option("--grid", grid, "vos, sampler or tau")->capture_default_str()
      ->check(CLI::IsMember({"vos", "sampler", "tau"}));
  ablate->add_option("--seeds", n_seeds, "Number of seeds, starting at the config seed")->capture_default_str()
      ->check(CLI::PositiveNumber);

  CommonFlags export_flags;
  int every = 1;
  auto* exp = app.add_subcommand("export-features", "Train and write per-epoch feature/outlier CSVs");
  add_common(exp, export_flags);
  exp->add_option("--every", every, "Export every n-th training epoch")->capture_default_str()
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      const auto c = base_config(gen_flags);
      c.validate();
      fs::create_directories(gen_flags.out_dir);
      const fs::path dir(gen_flags.out_dir);
      const auto clean = data::generate(c.train_spec(), 0);
      data::save_dataset((dir / "train.csv").string(), data::inject_noise(clean, c.noise_spec()));
      data::save_dataset((dir / "test.csv").string(), data::generate(c.test_spec(), 1));
      data::save_features((dir / "ood_far.csv").string(), data::generate_ood(c.ood_spec(), clean, data::OodRegime::far).features);
      data::save_features((dir / "ood_near.csv").string(), data::generate_ood(c.ood_spec(), clean, data::OodRegime::near).features);
      std::cout << "wrote " << dir.string() << "/{train,test,ood_far,ood_near}.csv\n";
    } else if (*train) {
      auto c = base_config(train_flags);
      if (disable_vos) c.disable_vos = true;
      if (disable_cl) c.disable_cl = true;
      if (sampler) c.sampler = *sampler;
      if (tau_rej) c.tau_rej = *tau_rej;
      if (tau_auto) c.tau_auto = true;
      c.validate();
      print_summary(harness::run_experiment(c, {train_flags.out_dir}));
    } else if (*ood) {
      double temperature = 1.0;
      const auto nets = harness::load_model(model_path, &temperature);
      const auto id_scores = harness::ood_scores(nets, read_any_features(id_path), temperature);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& p : ood_paths) {
        const eval::OodScoreSet set{id_scores, harness::ood_scores(nets, read_any_features(p), temperature)};
        out.push_back({{"ood", p}, {"auroc", eval::auroc(set)}, {"fpr95", eval::fpr_at_95_tpr(set)}});
      }
      std::cout << out.dump(2) << "\n";
    } else if (*ablate) {
      const auto c = base_config(ablate_flags);
      c.validate();
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < n_seeds; ++i) seeds.push_back(c.seed + static_cast<std::uint64_t>(i));
      const auto rows = harness::run_ablation(harness::ablation_grid(c, grid), seeds, ablate_flags.out_dir);
      const auto path = fs::path(ablate_flags.out_dir) / "comparison.csv";
      std::ofstream out(path);
      if (!out) throw IoError("cannot write " + path.string());
      harness::write_comparison_csv(out, rows);
      harness::write_comparison_csv(std::cout, rows);
    } else if (*exp) {
      auto c = base_config(export_flags);
      c.export_features = true;
      c.export_every = every;
      c.validate();
      harness::run_experiment(c, {export_flags.out_dir});
      std::cout << "wrote " << (fs::path(export_flags.out_dir) / "features").string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kTraining;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kTraining;
  }
  return kOk;
}
