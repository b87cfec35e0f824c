#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nlvos/harness/config.hpp"
#include "nlvos/harness/report.hpp"

namespace nlvos::harness {

struct AblationVariant {
  std::string name;
  RunConfig config;
};

/// Named grids over a base config:
///   vos      - outlier synthesis on / off
///   sampler  - uniform, gaussian, perturbation, hybrid
///   tau      - auto-scaled rejection radius at 0.5x, 1x, 1.5x
std::vector<AblationVariant> ablation_grid(const RunConfig& base, const std::string& grid);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  RunSummary summary;
};

/// Runs every variant for every seed. With a non-empty out_dir each run
/// writes into out_dir/<variant>/seed_<seed>.
std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                      const std::vector<std::uint64_t>& seeds, const std::string& out_dir = {});

/// One row per run followed by one "mean" row per variant.
void write_comparison_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace nlvos::harness
