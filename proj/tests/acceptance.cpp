// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Optional arguments restrict the run to the listed criterion numbers.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "nlvos/eval/metrics.hpp"
#include "nlvos/geometry/geometry.hpp"
#include "nlvos/harness/ablation.hpp"
#include "nlvos/harness/trainer.hpp"
#include "nlvos/nn/losses.hpp"
#include "nlvos/partition/gmm1d.hpp"
#include "support/gradient_suite.hpp"
#include "support/spade_toy.hpp"

namespace h = nlvos::harness;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

struct VariantMeans {
  double final_accuracy = 0, support_f1 = 0, far_auroc = 0, far_fpr95 = 0;
};

std::map<std::string, VariantMeans> means_by_variant(const std::vector<h::AblationRow>& rows) {
  std::map<std::string, VariantMeans> out;
  std::map<std::string, int> n;
  for (const auto& r : rows) {
    auto& m = out[r.variant];
    m.final_accuracy += r.summary.final_accuracy;
    m.support_f1 += r.summary.final_support_f1;
    m.far_auroc += r.summary.far->auroc;
    m.far_fpr95 += r.summary.far->fpr95;
    ++n[r.variant];
  }
  for (auto& [name, m] : out) {
    const double k = n[name];
    m.final_accuracy /= k;
    m.support_f1 /= k;
    m.far_auroc /= k;
    m.far_fpr95 /= k;
  }
  return out;
}

// Ablation runs shared by several criteria.
std::vector<h::AblationRow> vos_rows;
double vos_seconds = 0;
const std::vector<h::AblationRow>& vos_grid() {
  if (vos_rows.empty()) {
    const auto t0 = Clock::now();
    vos_rows = h::run_ablation(h::ablation_grid(h::RunConfig{}, "vos"), kSeeds);
    vos_seconds = seconds_since(t0);
  }
  return vos_rows;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto worst = nlvos::testing::run_gradient_suite(100, 1);
  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  std::ostringstream d;
  for (const auto& [name, g] : worst) {
    ok = ok && g.max_rel_error <= 1e-4 && g.configs >= 100 && g.checked > 10 * (g.skipped + g.unresolved);
    d << name << " " << fmt("%.2e", g.max_rel_error) << " (" << g.checked << " coords, " << g.skipped << " kink, "
      << g.unresolved << " unresolved); ";
  }
  d << fmt("100 configs, %.1f s", secs);
  return {ok, d.str()};
}

Outcome oracle_suite() {
  std::ostringstream d;
  // Planted mixture.
  std::mt19937_64 rng(2024);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> a(0.1, 0.03), b(0.8, 0.05);
  std::vector<double> losses;
  for (int i = 0; i < 2000; ++i) losses.push_back(coin(rng) ? a(rng) : b(rng));
  const auto g = nlvos::partition::fit_gmm_1d(losses);
  const bool gmm_ok = std::abs(g.clean().mean - 0.1) <= 0.03 && std::abs(g.noisy().mean - 0.8) <= 0.03;
  d << fmt("gmm means %.4f/%.4f; ", g.clean().mean, g.noisy().mean);

  // Disk construction.
  namespace geo = nlvos::geometry;
  MatrixXd corners(2, 2);
  corners << 0, 1, 0, 1;
  const auto env = *geo::estimate_envelope(corners, 0);
  geo::CentroidSet center;
  center.classes = {0};
  center.counts = {1};
  center.means = MatrixXd::Constant(2, 1, 0.5);
  std::mt19937_64 grng(7);
  const MatrixXd cands = geo::sample_candidates(env, center, MatrixXd(), {}, 100000, geo::Sampler::uniform, grng);
  const double rate = geo::filter_outliers(cands, center, 0.3, geo::Sampler::uniform).acceptance_rate();
  const double expect = 1.0 - std::numbers::pi * 0.09;
  const bool disk_ok = std::abs(rate - expect) <= 0.01;
  d << fmt("disk %.4f vs %.4f; ", rate, expect);

  // AUROC against the pairwise oracle.
  int auroc_exact = 0;
  std::mt19937_64 srng(99);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    nlvos::eval::OodScoreSet s;
    for (int i = 0; i < 10; ++i) s.id_scores.push_back(std::round(4 * (n01(srng) + 0.5)) / 4);
    for (int i = 0; i < 10; ++i) s.ood_scores.push_back(std::round(4 * n01(srng)) / 4);
    double wins = 0;
    for (double x : s.id_scores) {
      for (double y : s.ood_scores) wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
    }
    auroc_exact += nlvos::eval::auroc(s) == wins / 100.0;
  }
  d << "auroc exact " << auroc_exact << "/50; ";

  // Envelope and centroids against brute-force scans.
  std::mt19937_64 erng(5);
  const MatrixXd z = nlvos::testing::random_matrix(6, 1000, erng, 2.0);
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) labels.push_back((i * 7) % 5);
  const auto e = *geo::estimate_envelope(z, 0);
  const auto c = geo::class_centroids(z, labels, 0);
  bool scan_ok = true;
  for (Eigen::Index j = 0; j < 6; ++j) {
    double lo = z(j, 0), hi = z(j, 0);
    for (Eigen::Index i = 0; i < 1000; ++i) {
      lo = std::min(lo, z(j, i));
      hi = std::max(hi, z(j, i));
    }
    scan_ok = scan_ok && e.lower(j) == lo && e.upper(j) == hi;
  }
  for (int cls = 0; cls < 5; ++cls) {
    VectorXd sum = VectorXd::Zero(6);
    int count = 0;
    for (int i = 0; i < 1000; ++i) {
      if (labels[static_cast<std::size_t>(i)] == cls) {
        sum += z.col(i);
        ++count;
      }
    }
    scan_ok = scan_ok && (*c.centroid(cls) - sum / count).cwiseAbs().maxCoeff() <= 1e-12;
  }
  d << "envelope/centroid scans " << (scan_ok ? "match" : "differ");
  return {gmm_ok && disk_ok && auroc_exact == 50 && scan_ok, d.str()};
}

Outcome energy_invariants() {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> kdist(2, 12);
  std::uniform_real_distribution<double> shift(-500.0, 500.0);
  double worst = 0;
  int large = 0;
  for (int i = 0; i < 10000; ++i) {
    const int k = kdist(rng);
    const double scale = i % 4 == 0 ? 1e3 : 5.0;
    VectorXd l = nlvos::testing::random_matrix(k, 1, rng, 1.0).col(0);
    if (scale == 1e3) {
      l = l / l.cwiseAbs().maxCoeff() * 1e3;  // ||l||_inf = 1e3 exactly
      ++large;
    } else {
      l *= scale;
    }
    const double c = shift(rng);
    const VectorXd shifted = l.array() + c;
    worst = std::max(worst, std::abs(nlvos::nn::energy<double>(shifted) - nlvos::nn::energy<double>(l) + c));
  }
  double uniform_worst = 0;
  for (int k = 2; k <= 100; ++k) {
    for (double v : {0.0, 1.0, -3.5, 1e3}) {
      const VectorXd l = VectorXd::Constant(k, v);
      uniform_worst =
          std::max(uniform_worst, std::abs(nlvos::nn::energy<double>(l) - (-std::log(static_cast<double>(k)) - v)));
    }
  }
  return {worst <= 1e-9 && uniform_worst <= 1e-12,
          fmt("shift max dev %.2e over 10000 cases (%d at |l|=1e3); uniform max dev %.2e", worst, large,
              uniform_worst)};
}

Outcome spade_toy() {
  const auto t0 = Clock::now();
  const auto r = nlvos::testing::run_spade_toy(500);
  const double secs = seconds_since(t0);
  return {r.mean_clean_energy + 2.0 < r.mean_outlier_energy && secs < 10.0,
          fmt("E(clean) %.3f, E(outlier) %.3f, %.2f s", r.mean_clean_energy, r.mean_outlier_energy, secs)};
}

Outcome vos_accuracy() {
  const auto m = means_by_variant(vos_grid());
  const auto& on = m.at("vos");
  const auto& off = m.at("no-vos");
  const double gain = 100.0 * (on.final_accuracy - off.final_accuracy);
  return {gain >= 1.0 && on.support_f1 > off.support_f1 && vos_seconds <= 600.0,
          fmt("acc %.4f vs %.4f (%+.2f pts), support F1 %.4f vs %.4f, %.0f s", on.final_accuracy, off.final_accuracy,
              gain, on.support_f1, off.support_f1, vos_seconds)};
}

Outcome sampler_ranking() {
  const auto rows = h::run_ablation(h::ablation_grid(h::RunConfig{}, "sampler"), kSeeds);
  const auto m = means_by_variant(rows);
  const double uni = m.at("uniform").final_accuracy;
  bool ok = true;
  std::ostringstream d;
  d << fmt("uniform %.4f", uni);
  for (const char* other : {"gaussian", "perturbation", "hybrid"}) {
    const double acc = m.at(other).final_accuracy;
    const double gap = 100.0 * (uni - acc);
    d << fmt("; %s %.4f", other, acc);
    if (std::abs(gap) <= 0.5) {
      d << " (TIE within 0.5 pts)";
    } else if (gap < 0) {
      ok = false;
    }
  }
  return {ok, d.str()};
}

Outcome vos_ood() {
  const auto m = means_by_variant(vos_grid());
  const auto& on = m.at("vos");
  const auto& off = m.at("no-vos");
  return {on.far_auroc >= 0.95 && on.far_auroc > off.far_auroc && on.far_fpr95 < off.far_fpr95,
          fmt("far AUROC %.4f vs %.4f, FPR95 %.4f vs %.4f", on.far_auroc, off.far_auroc, on.far_fpr95, off.far_fpr95)};
}

std::optional<h::RunReport> default_report;
const h::RunReport& default_run() {
  if (!default_report) default_report = h::run_experiment(h::RunConfig{});
  return *default_report;
}

Outcome envelope_contraction() {
  const auto& r = default_run();
  std::optional<double> peak, last;
  int peak_epoch = -1;
  for (const auto& e : r.epochs) {
    const auto v = e.envelope_log_volume();
    if (!v) continue;
    if (!peak || *v > *peak) {
      peak = v;
      peak_epoch = e.epoch;
    }
  }
  if (!r.epochs.empty()) last = r.epochs.back().envelope_log_volume();
  if (!peak || !last) return {false, "no envelope was estimated"};
  return {*last < *peak, fmt("final %.3f < peak %.3f (epoch %d)", *last, *peak, peak_epoch)};
}

Outcome determinism() {
  const std::string a = h::serialize(default_run());
  const std::string b = h::serialize(h::run_experiment(h::RunConfig{}));
  return {a == b, fmt("%zu bytes, %s", a.size(), a == b ? "identical" : "different")};
}

Outcome tau_sweep() {
  const auto rows = h::run_ablation(h::ablation_grid(h::RunConfig{}, "tau"), kSeeds);
  const auto m = means_by_variant(rows);
  double lo = 1, hi = 0;
  std::ostringstream d;
  for (const auto& [name, v] : m) {
    lo = std::min(lo, v.final_accuracy);
    hi = std::max(hi, v.final_accuracy);
    d << fmt("%s %.4f; ", name.c_str(), v.final_accuracy);
  }
  const double spread = 100.0 * (hi - lo);
  d << fmt("spread %.2f pts", spread);
  return {spread <= 3.0, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_suite}, {2, oracle_suite}, {3, energy_invariants},   {4, spade_toy},  {5, vos_accuracy},
      {6, sampler_ranking}, {7, vos_ood},     {8, envelope_contraction}, {9, determinism}, {10, tau_sweep}};
  int failed = 0;
  for (const auto& [n, run] : criteria) {
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
