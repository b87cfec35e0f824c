#include "nlvos/partition/selection.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "nlvos/error.hpp"

namespace nlvos::partition {

IndicatorWindow::IndicatorWindow(int capacity) {
  if (capacity < 1) throw ParameterError("window length must be at least 1");
  slots_.assign(static_cast<std::size_t>(capacity), false);
}

void IndicatorWindow::push(bool clean) {
  slots_[static_cast<std::size_t>(head_)] = clean;
  head_ = (head_ + 1) % capacity();
  count_ = std::min(count_ + 1, capacity());
}

bool IndicatorWindow::all_clean() const {
  return full() && std::all_of(slots_.begin(), slots_.end(), [](bool b) { return b; });
}

std::vector<bool> IndicatorWindow::history() const {
  std::vector<bool> out;
  out.reserve(static_cast<std::size_t>(count_));
  const int start = (head_ - count_ + capacity()) % capacity();
  for (int i = 0; i < count_; ++i) out.push_back(slots_[static_cast<std::size_t>((start + i) % capacity())]);
  return out;
}

std::vector<LossRecord> make_records(std::span<const int> ids, int window) {
  std::vector<LossRecord> records;
  records.reserve(ids.size());
  for (int id : ids) records.push_back({id, 0.0, 0.0, IndicatorWindow(window)});
  return records;
}

Partition partition_epoch(std::vector<LossRecord>& records, std::span<const double> normalized_losses,
                          const Gmm1d& gmm, double tau_clean) {
  if (!(tau_clean > 0.0 && tau_clean < 1.0)) throw ParameterError("tau_clean must lie in (0, 1)");
  if (normalized_losses.size() != records.size()) {
    throw StructuralError("loss vector does not match the record count");
  }
  Partition p;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    r.loss = normalized_losses[i];
    r.clean_probability = clean_probability(gmm, r.loss);
    const bool clean = r.clean_probability >= tau_clean;
    r.window.push(clean);
    (clean ? p.labeled : p.unlabeled).push_back(i);
  }
  p.support = support_set(records, records.empty() ? 1 : records.front().window.capacity());
  return p;
}

std::vector<std::size_t> support_set(std::span<const LossRecord> records, int v) {
  if (v < 1) throw ParameterError("window length must be at least 1");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& w = records[i].window;
    if (w.size() < v) continue;
    const auto h = w.history();
    if (std::all_of(h.end() - v, h.end(), [](bool b) { return b; })) out.push_back(i);
  }
  return out;
}

void write_selection_csv(std::ostream& out, int epoch, std::span<const LossRecord> records,
                         std::span<const std::size_t> support, bool header) {
  if (header) out << "epoch,sample_id,loss,w,in_support\n";
  std::vector<bool> in_support(records.size(), false);
  for (auto i : support) in_support[i] = true;
  out << std::setprecision(17);
  for (std::size_t i = 0; i < records.size(); ++i) {
    out << epoch << ',' << records[i].id << ',' << records[i].loss << ','
        << records[i].clean_probability << ',' << (in_support[i] ? 1 : 0) << '\n';
  }
}

}  // namespace nlvos::partition
