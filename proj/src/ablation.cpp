#include "nlvos/harness/ablation.hpp"

#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>

#include "nlvos/error.hpp"
#include "nlvos/harness/trainer.hpp"

namespace nlvos::harness {

std::vector<AblationVariant> ablation_grid(const RunConfig& base, const std::string& grid) {
  std::vector<AblationVariant> out;
  if (grid == "vos") {
    auto on = base;
    on.disable_vos = false;
    auto off = base;
    off.disable_vos = true;
    out = {{"vos", on}, {"no-vos", off}};
  } else if (grid == "sampler") {
    for (const char* s : {"uniform", "gaussian", "perturbation", "hybrid"}) {
      auto c = base;
      c.sampler = s;
      c.disable_vos = false;
      out.push_back({s, c});
    }
  } else if (grid == "tau") {
    for (const auto& [name, scale] : {std::pair{"tau-0.5x", 0.5}, {"tau-1x", 1.0}, {"tau-1.5x", 1.5}}) {
      auto c = base;
      c.tau_auto = true;
      c.tau_scale = scale;
      c.disable_vos = false;
      out.push_back({name, c});
    }
  } else {
    throw ConfigError("unknown ablation grid '" + grid + "' (expected vos, sampler or tau)");
  }
  return out;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    for (const auto seed : seeds) {
      auto config = v.config;
      config.seed = seed;
      RunOutputs outputs;
      if (!out_dir.empty()) {
        outputs.out_dir = (std::filesystem::path(out_dir) / v.name / ("seed_" + std::to_string(seed))).string();
      }
      rows.push_back({v.name, seed, run_experiment(config, outputs).summary});
    }
  }
  return rows;
}

namespace {

struct Columns {
  double final_accuracy = 0, best_accuracy = 0, support_f1 = 0;
  double far_auroc = 0, far_fpr95 = 0, near_auroc = 0, near_fpr95 = 0;
};

Columns columns(const RunSummary& s) {
  Columns c;
  c.final_accuracy = s.final_accuracy;
  c.best_accuracy = s.best_accuracy;
  c.support_f1 = s.final_support_f1;
  if (s.far) c.far_auroc = s.far->auroc, c.far_fpr95 = s.far->fpr95;
  if (s.near) c.near_auroc = s.near->auroc, c.near_fpr95 = s.near->fpr95;
  return c;
}

void write_row(std::ostream& out, const std::string& variant, const std::string& seed, const Columns& c) {
  out << variant << "," << seed << "," << c.final_accuracy << "," << c.best_accuracy << "," << c.support_f1 << ","
      << c.far_auroc << "," << c.far_fpr95 << "," << c.near_auroc << "," << c.near_fpr95 << "\n";
}

}  // namespace

void write_comparison_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << std::setprecision(10)
      << "variant,seed,final_accuracy,best_accuracy,final_support_f1,far_auroc,far_fpr95,near_auroc,near_fpr95\n";
  std::vector<std::string> order;
  std::map<std::string, std::pair<Columns, int>> sums;
  for (const auto& r : rows) {
    const auto c = columns(r.summary);
    write_row(out, r.variant, std::to_string(r.seed), c);
    auto [it, fresh] = sums.try_emplace(r.variant);
    if (fresh) order.push_back(r.variant);
    auto& [s, n] = it->second;
    s.final_accuracy += c.final_accuracy;
    s.best_accuracy += c.best_accuracy;
    s.support_f1 += c.support_f1;
    s.far_auroc += c.far_auroc;
    s.far_fpr95 += c.far_fpr95;
    s.near_auroc += c.near_auroc;
    s.near_fpr95 += c.near_fpr95;
    ++n;
  }
  for (const auto& name : order) {
    auto [s, n] = sums[name];
    for (double* v : {&s.final_accuracy, &s.best_accuracy, &s.support_f1, &s.far_auroc, &s.far_fpr95,
                      &s.near_auroc, &s.near_fpr95}) {
      *v /= n;
    }
    write_row(out, name, "mean", s);
  }
}

}  // namespace nlvos::harness
