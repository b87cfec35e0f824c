#include "nlvos/partition/gmm1d.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "nlvos/error.hpp"

namespace nlvos::partition {
namespace {

double percentile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double log_gauss(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

// log(w0 N0) and log(w1 N1) for one value.
std::array<double, 2> joint_logs(const Gmm1d& gmm, double x) {
  std::array<double, 2> out{};
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& c = gmm.components[k];
    out[k] = std::log(c.weight) + log_gauss(x, c.mean, c.variance);
  }
  return out;
}

double log_add(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void tag_clean(Gmm1d& gmm) {
  gmm.clean_index = gmm.components[1].mean < gmm.components[0].mean ? 1 : 0;
}

}  // namespace

double log_likelihood(const Gmm1d& gmm, std::span<const double> values) {
  double ll = 0.0;
  for (double x : values) {
    const auto j = joint_logs(gmm, x);
    ll += log_add(j[0], j[1]);
  }
  return ll;
}

Gmm1d fit_gmm_1d(std::span<const double> losses, const GmmOptions& options) {
  if (losses.empty()) throw ParameterError("cannot fit a mixture to an empty loss vector");
  if (options.max_iters < 0 || !(options.variance_floor > 0)) {
    throw ParameterError("invalid GMM options");
  }
  Gmm1d gmm;
  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    gmm.degenerate = true;
    gmm.components[0] = {sorted.front(), options.variance_floor, 0.5};
    gmm.components[1] = gmm.components[0];
    return gmm;
  }

  const auto n = static_cast<double>(losses.size());
  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  double pooled = 0.0;
  for (double x : losses) pooled += (x - mean) * (x - mean);
  pooled = std::max(pooled / n, options.variance_floor);

  double lo = percentile(sorted, 0.1);
  double hi = percentile(sorted, 0.9);
  if (lo == hi) {
    lo = sorted.front();
    hi = sorted.back();
  }
  gmm.components[0] = {lo, pooled, 0.5};
  gmm.components[1] = {hi, pooled, 0.5};

  std::vector<double> resp(losses.size());  // responsibility of component 0
  double ll = log_likelihood(gmm, losses);
  gmm.log_likelihood_trace.push_back(ll);
  for (int it = 0; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < losses.size(); ++i) {
      const auto j = joint_logs(gmm, losses[i]);
      resp[i] = std::exp(j[0] - log_add(j[0], j[1]));
    }
    std::array<double, 2> mass{}, sum{}, sq{};
    for (std::size_t i = 0; i < losses.size(); ++i) {
      const double r[2] = {resp[i], 1.0 - resp[i]};
      for (std::size_t k = 0; k < 2; ++k) {
        mass[k] += r[k];
        sum[k] += r[k] * losses[i];
      }
    }
    for (std::size_t k = 0; k < 2; ++k) {
      // A component that lost all mass keeps its previous parameters.
      if (mass[k] <= 0.0) continue;
      gmm.components[k].mean = sum[k] / mass[k];
    }
    for (std::size_t i = 0; i < losses.size(); ++i) {
      const double r[2] = {resp[i], 1.0 - resp[i]};
      for (std::size_t k = 0; k < 2; ++k) {
        const double d = losses[i] - gmm.components[k].mean;
        sq[k] += r[k] * d * d;
      }
    }
    for (std::size_t k = 0; k < 2; ++k) {
      if (mass[k] <= 0.0) continue;
      gmm.components[k].variance = std::max(sq[k] / mass[k], options.variance_floor);
    }
    const double total = mass[0] + mass[1];
    // Keep both weights strictly inside (0, 1) so log(weight) stays finite.
    constexpr double kMinWeight = 1e-300;
    gmm.components[0].weight = std::clamp(mass[0] / total, kMinWeight, 1.0 - kMinWeight);
    gmm.components[1].weight = 1.0 - gmm.components[0].weight;

    const double next = log_likelihood(gmm, losses);
    gmm.log_likelihood_trace.push_back(next);
    gmm.iterations = it + 1;
    const bool converged = std::abs(next - ll) < options.tol;
    ll = next;
    if (converged) break;
  }
  tag_clean(gmm);
  return gmm;
}

double clean_probability(const Gmm1d& gmm, double loss) {
  if (gmm.degenerate) return 0.5;
  const auto j = joint_logs(gmm, loss);
  const auto c = static_cast<std::size_t>(gmm.clean_index);
  const double w = std::exp(j[c] - log_add(j[0], j[1]));
  return std::clamp(w, 0.0, 1.0);
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (span <= 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / span;
  return out;
}

}  // namespace nlvos::partition
