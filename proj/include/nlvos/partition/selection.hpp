#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "nlvos/partition/gmm1d.hpp"

namespace nlvos::partition {

/// Fixed-capacity ring of "judged clean" indicators for one sample.
class IndicatorWindow {
 public:
  explicit IndicatorWindow(int capacity = 3);

  void push(bool clean);
  int capacity() const { return static_cast<int>(slots_.size()); }
  int size() const { return count_; }
  bool full() const { return count_ == capacity(); }
  /// True iff the window is full and every stored indicator is set.
  bool all_clean() const;
  /// Indicators from oldest to newest.
  std::vector<bool> history() const;

 private:
  std::vector<bool> slots_;
  int head_ = 0;
  int count_ = 0;
};

/// Selection bookkeeping for one sample of the training set.
struct LossRecord {
  int id = 0;
  double loss = 0.0;  // normalized GCE loss of the current epoch
  double clean_probability = 0.0;
  IndicatorWindow window;
};

std::vector<LossRecord> make_records(std::span<const int> ids, int window);

/// Split of the training set by position into the record vector.
struct Partition {
  std::vector<std::size_t> labeled;    // w >= tau_clean
  std::vector<std::size_t> unlabeled;  // complement of labeled
  std::vector<std::size_t> support;    // clean for the last v epochs
};

/// Stores normalized losses, assigns w_i from the mixture, appends the
/// indicator 1(w_i >= tau_clean) to each window and returns X_t / U_t.
Partition partition_epoch(std::vector<LossRecord>& records, std::span<const double> normalized_losses,
                          const Gmm1d& gmm, double tau_clean);

/// Positions whose last v indicators are all set; empty until windows fill.
std::vector<std::size_t> support_set(std::span<const LossRecord> records, int v);

/// One row per record: epoch,sample_id,loss,w,in_support.
void write_selection_csv(std::ostream& out, int epoch, std::span<const LossRecord> records,
                         std::span<const std::size_t> support, bool header);

}  // namespace nlvos::partition
