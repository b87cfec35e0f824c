#include "nlvos/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "nlvos/error.hpp"

namespace nlvos::data {

LabeledDataset::LabeledDataset(MatrixXd features, std::vector<int> true_labels,
                               std::vector<int> noisy_labels, std::vector<int> ids, int num_classes)
    : true_labels_(std::move(true_labels)) {
  const auto n = static_cast<std::size_t>(features.cols());
  if (true_labels_.size() != n || noisy_labels.size() != n || ids.size() != n) {
    throw StructuralError("dataset columns disagree in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (true_labels_[i] < 0 || true_labels_[i] >= num_classes || noisy_labels[i] < 0 ||
        noisy_labels[i] >= num_classes) {
      throw StructuralError("label out of range");
    }
  }
  view_.features = std::move(features);
  view_.labels = std::move(noisy_labels);
  view_.ids = std::move(ids);
  view_.num_classes = num_classes;
}

double LabeledDataset::flip_fraction() const {
  if (size() == 0) return 0.0;
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < size(); ++i) flipped += view_.labels[i] != true_labels_[i];
  return static_cast<double>(flipped) / static_cast<double>(size());
}

std::vector<bool> LabeledDataset::clean_mask() const {
  std::vector<bool> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = view_.labels[i] == true_labels_[i];
  return out;
}

std::string to_string(Generator g) {
  switch (g) {
    case Generator::gaussian_blobs: return "gaussian-blobs";
    case Generator::two_moons_kd: return "two-moons-kd";
    case Generator::ring_classes: return "ring-classes";
  }
  return "gaussian-blobs";
}

std::optional<Generator> parse_generator(std::string_view name) {
  if (name == "gaussian-blobs") return Generator::gaussian_blobs;
  if (name == "two-moons-kd") return Generator::two_moons_kd;
  if (name == "ring-classes") return Generator::ring_classes;
  return std::nullopt;
}

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ParameterError("need at least two classes");
  if (n_samples < n_classes) throw ParameterError("need at least one sample per class");
  if (input_dim < 1) throw ParameterError("input dimension must be positive");
  if (generator != Generator::gaussian_blobs && input_dim < 2) {
    throw ParameterError("moons and rings need at least two input dimensions");
  }
  if (!(separation > 0) || !std::isfinite(separation)) throw ParameterError("separation must be positive");
}

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

// Deterministic random rotation used to embed 2-D generators in input_dim dims.
MatrixXd rotation(int dim, std::uint64_t seed) {
  auto rng = stream_rng(seed, 0xa11ce);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd a(dim, dim);
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<MatrixXd> qr(a);
  return qr.householderQ();
}

}  // namespace

MatrixXd class_centers(const SyntheticSpec& spec) {
  spec.validate();
  const int k = spec.n_classes;
  const int d = spec.input_dim;
  MatrixXd centers = MatrixXd::Zero(d, k);
  switch (spec.generator) {
    case Generator::gaussian_blobs: {
      if (k <= d) {
        // Scaled simplex corners: every pair sits exactly `separation` apart.
        for (int c = 0; c < k; ++c) centers(c, c) = spec.separation / std::numbers::sqrt2;
      } else {
        auto rng = stream_rng(spec.seed, 0xce47e5);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index c = 0; c < centers.cols(); ++c) {
          for (Eigen::Index r = 0; r < centers.rows(); ++r) centers(r, c) = normal(rng);
        }
        double closest = std::numeric_limits<double>::infinity();
        for (int a = 0; a < k; ++a) {
          for (int b = a + 1; b < k; ++b) closest = std::min(closest, (centers.col(a) - centers.col(b)).norm());
        }
        centers *= spec.separation / closest;
      }
      break;
    }
    case Generator::two_moons_kd:
    case Generator::ring_classes: {
      auto ds = generate(spec, 0);
      std::vector<int> count(static_cast<std::size_t>(k), 0);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const int y = ds.true_labels()[i];
        centers.col(y) += ds.features().col(static_cast<Eigen::Index>(i));
        ++count[static_cast<std::size_t>(y)];
      }
      for (int c = 0; c < k; ++c) centers.col(c) /= std::max(1, count[static_cast<std::size_t>(c)]);
      break;
    }
  }
  return centers;
}

LabeledDataset generate(const SyntheticSpec& spec, std::uint64_t stream) {
  spec.validate();
  const int k = spec.n_classes;
  const int d = spec.input_dim;
  const int n = spec.n_samples;
  auto rng = stream_rng(spec.seed, stream + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  MatrixXd x(d, n);
  std::vector<int> labels(static_cast<std::size_t>(n));
  std::vector<int> ids(static_cast<std::size_t>(n));
  const MatrixXd centers = spec.generator == Generator::gaussian_blobs ? class_centers(spec) : MatrixXd();
  const MatrixXd rot = spec.generator == Generator::gaussian_blobs ? MatrixXd() : rotation(d, spec.seed);
  // Moons and rings: geometry scales with `separation`; per-dimension noise is
  // 0.3 for moons and 0.1 for rings.
  const double scale = spec.separation / 3.0;
  constexpr double kPlanarNoise = 0.1;

  for (int i = 0; i < n; ++i) {
    const int y = i % k;
    labels[static_cast<std::size_t>(i)] = y;
    ids[static_cast<std::size_t>(i)] = i;
    VectorXd p(d);
    switch (spec.generator) {
      case Generator::gaussian_blobs:
        for (int j = 0; j < d; ++j) p(j) = centers(j, y) + normal(rng);
        break;
      case Generator::two_moons_kd: {
        // Moon pairs interleave like the classic two moons; pairs repeat along x.
        const double t = std::numbers::pi * unit(rng);
        const double shift = 2.0 * 1.5 * static_cast<double>(y / 2);
        VectorXd q = VectorXd::Zero(d);
        if (y % 2 == 0) {
          q(0) = std::cos(t) + shift;
          q(1) = std::sin(t);
        } else {
          q(0) = 1.0 - std::cos(t) + shift;
          q(1) = 0.5 - std::sin(t);
        }
        q.head(2) *= 3.0 * scale;
        for (int j = 0; j < d; ++j) q(j) += kPlanarNoise * 3.0 * normal(rng);
        p = rot * q;
        break;
      }
      case Generator::ring_classes: {
        const double t = 2.0 * std::numbers::pi * unit(rng);
        const double radius = scale * static_cast<double>(y + 1);
        VectorXd q = VectorXd::Zero(d);
        q(0) = radius * std::cos(t);
        q(1) = radius * std::sin(t);
        for (int j = 0; j < d; ++j) q(j) += kPlanarNoise * normal(rng);
        p = rot * q;
        break;
      }
    }
    x.col(i) = p;
  }
  auto noisy = labels;
  return LabeledDataset(std::move(x), std::move(labels), std::move(noisy), std::move(ids), k);
}

std::string to_string(NoiseMode m) { return m == NoiseMode::symmetric ? "symmetric" : "asymmetric"; }

std::optional<NoiseMode> parse_noise_mode(std::string_view name) {
  if (name == "symmetric" || name == "sym") return NoiseMode::symmetric;
  if (name == "asymmetric" || name == "asym") return NoiseMode::asymmetric;
  return std::nullopt;
}

LabeledDataset inject_noise(const LabeledDataset& clean, const NoiseSpec& noise) {
  if (!(noise.rate >= 0.0 && noise.rate < 1.0)) throw ParameterError("noise rate must lie in [0, 1)");
  if (noise.mode == NoiseMode::asymmetric && noise.rate > 0.5) {
    std::clog << "warning: asymmetric noise above 0.5 makes the flipped class the majority\n";
  }
  const int k = clean.num_classes();
  auto rng = stream_rng(noise.seed, 0x4015e);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> other(0, k - 2);
  std::vector<int> noisy(clean.true_labels().begin(), clean.true_labels().end());
  for (auto& y : noisy) {
    if (!(unit(rng) < noise.rate)) continue;
    if (noise.mode == NoiseMode::symmetric) {
      const int pick = other(rng);
      y = pick >= y ? pick + 1 : pick;
    } else {
      y = (y + 1) % k;
    }
  }
  return LabeledDataset(clean.features(), {clean.true_labels().begin(), clean.true_labels().end()},
                        std::move(noisy), {clean.ids().begin(), clean.ids().end()}, k);
}

OodSet generate_ood(const OodSpec& spec, const LabeledDataset& id, OodRegime regime) {
  if (spec.n_samples < 1) throw ParameterError("OOD sample count must be positive");
  if (id.size() == 0) throw ParameterError("OOD generation needs a non-empty ID dataset");
  const MatrixXd& x = id.features();
  const Eigen::Index d = x.rows();
  auto rng = stream_rng(spec.seed, regime == OodRegime::far ? 0xfa7 : 0x4ea7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  OodSet out;
  out.features.resize(d, spec.n_samples);

  if (regime == OodRegime::far) {
    const VectorXd lo = x.rowwise().minCoeff();
    const VectorXd hi = x.rowwise().maxCoeff();
    const VectorXd width = (hi - lo).cwiseMax(1e-9);
    const VectorXd start = hi + spec.far_gap * width;
    for (Eigen::Index c = 0; c < out.features.cols(); ++c) {
      for (Eigen::Index j = 0; j < d; ++j) out.features(j, c) = start(j) + width(j) * unit(rng);
    }
    return out;
  }

  const int k = id.num_classes();
  MatrixXd centroids = MatrixXd::Zero(d, k);
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < id.size(); ++i) {
    const int y = id.true_labels()[i];
    centroids.col(y) += x.col(static_cast<Eigen::Index>(i));
    ++count[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < k; ++c) centroids.col(c) /= std::max(1, count[static_cast<std::size_t>(c)]);
  double radius = 0.0;
  double var = 0.0;
  for (std::size_t i = 0; i < id.size(); ++i) {
    const VectorXd diff = x.col(static_cast<Eigen::Index>(i)) - centroids.col(id.true_labels()[i]);
    radius += diff.norm();
    var += diff.squaredNorm();
  }
  radius /= static_cast<double>(id.size());
  const double within_std = std::sqrt(var / static_cast<double>(id.size() * static_cast<std::size_t>(d)));
  out.cluster_radius = radius;
  const double target = spec.near_distance * radius;

  // One near-OOD center per class: a random direction at `target` distance,
  // redrawn until that class stays the nearest centroid.
  for (int c = 0; c < k; ++c) {
    if (count[static_cast<std::size_t>(c)] == 0) continue;
    VectorXd center;
    for (int attempt = 0;; ++attempt) {
      VectorXd dir(d);
      for (Eigen::Index j = 0; j < d; ++j) dir(j) = normal(rng);
      dir.normalize();
      center = centroids.col(c) + target * dir;
      bool nearest = true;
      for (int o = 0; o < k; ++o) {
        if (o != c && count[static_cast<std::size_t>(o)] > 0 && (center - centroids.col(o)).norm() < target) {
          nearest = false;
        }
      }
      if (nearest) break;
      if (attempt > 10000) throw ParameterError("could not place a near-OOD center");
    }
    out.centers.push_back(center);
  }
  std::uniform_int_distribution<std::size_t> pick(0, out.centers.size() - 1);
  const double sigma = spec.near_spread * within_std;
  for (Eigen::Index col = 0; col < out.features.cols(); ++col) {
    const VectorXd& center = out.centers[pick(rng)];
    for (Eigen::Index j = 0; j < d; ++j) out.features(j, col) = center(j) + sigma * normal(rng);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw IoError("malformed number '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw IoError("malformed integer '" + s + "'");
  return static_cast<int>(v);
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void write_dataset_csv(std::ostream& out, const LabeledDataset& ds) {
  const Eigen::Index d = ds.features().rows();
  out << "id,true_label,noisy_label";
  for (Eigen::Index j = 0; j < d; ++j) out << ",f" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.ids()[i] << ',' << ds.true_labels()[i] << ',' << ds.noisy_labels()[i];
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << ds.features()(j, static_cast<Eigen::Index>(i));
    out << '\n';
  }
}

LabeledDataset read_dataset_csv(std::istream& in, int num_classes) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file");
  strip_cr(line);
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "true_label" || header[2] != "noisy_label") {
    throw IoError("dataset header must start with id,true_label,noisy_label");
  }
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[3 + j] != "f" + std::to_string(j)) throw IoError("unexpected feature column " + header[3 + j]);
  }
  std::vector<std::vector<double>> rows;
  std::vector<int> ids, truth, noisy;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw IoError("row has " + std::to_string(cells.size()) + " cells");
    ids.push_back(parse_int(cells[0]));
    truth.push_back(parse_int(cells[1]));
    noisy.push_back(parse_int(cells[2]));
    std::vector<double> f(d);
    for (std::size_t j = 0; j < d; ++j) f[j] = parse_double(cells[3 + j]);
    rows.push_back(std::move(f));
  }
  MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rows[i][j];
  }
  if (num_classes <= 0) {
    int mx = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) mx = std::max({mx, truth[i], noisy[i]});
    num_classes = std::max(2, mx + 1);
  }
  try {
    return LabeledDataset(std::move(x), std::move(truth), std::move(noisy), std::move(ids), num_classes);
  } catch (const StructuralError& e) {
    throw IoError(std::string("invalid dataset file: ") + e.what());
  }
}

void write_features_csv(std::ostream& out, const MatrixXd& features) {
  out << "id";
  for (Eigen::Index j = 0; j < features.rows(); ++j) out << ",f" << j;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    out << i;
    for (Eigen::Index j = 0; j < features.rows(); ++j) out << ',' << features(j, i);
    out << '\n';
  }
}

MatrixXd read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty feature file");
  strip_cr(line);
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "id") throw IoError("feature header must start with id");
  const std::size_t d = header.size() - 1;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw IoError("feature row has the wrong number of cells");
    std::vector<double> f(d);
    for (std::size_t j = 0; j < d; ++j) f[j] = parse_double(cells[1 + j]);
    rows.push_back(std::move(f));
  }
  MatrixXd x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = rows[i][j];
  }
  return x;
}

void save_dataset(const std::string& path, const LabeledDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_dataset_csv(out, ds);
  if (!out) throw IoError("failed writing " + path);
}

LabeledDataset load_dataset(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_dataset_csv(in, num_classes);
}

void save_features(const std::string& path, const MatrixXd& features) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_features_csv(out, features);
  if (!out) throw IoError("failed writing " + path);
}

MatrixXd load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_features_csv(in);
}

}  // namespace nlvos::data
