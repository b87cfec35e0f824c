#pragma once

#include <array>
#include <span>
#include <vector>

namespace nlvos::partition {

struct GaussianComponent {
  double mean = 0.0;
  double variance = 1.0;
  double weight = 0.5;
};

/// Two-component mixture over scalar losses. `clean_index` points at the
/// component with the smaller mean (first on ties).
struct Gmm1d {
  std::array<GaussianComponent, 2> components{};
  int clean_index = 0;
  bool degenerate = false;
  int iterations = 0;
  /// Log-likelihood at the initial parameters followed by one entry per EM step.
  std::vector<double> log_likelihood_trace;

  const GaussianComponent& clean() const { return components[static_cast<std::size_t>(clean_index)]; }
  const GaussianComponent& noisy() const { return components[static_cast<std::size_t>(1 - clean_index)]; }
};

struct GmmOptions {
  int max_iters = 100;
  double tol = 1e-8;
  double variance_floor = 1e-6;
};

/// EM fit from a deterministic start: means at the 10th/90th percentiles,
/// equal weights, pooled variance. All-equal input yields a degenerate model.
Gmm1d fit_gmm_1d(std::span<const double> losses, const GmmOptions& options = {});

double log_likelihood(const Gmm1d& gmm, std::span<const double> values);

/// Posterior of the small-mean component, p(g | loss). Degenerate fits give 0.5.
double clean_probability(const Gmm1d& gmm, double loss);

/// Min-max normalization to [0, 1]. A constant vector maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> values);

}  // namespace nlvos::partition
