#include "nlvos/harness/report.hpp"

#include <functional>

namespace nlvos::harness {

using nlohmann::json;

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json to_json(const LossMeans& l) {
  return {{"gce", l.gce}, {"l_x", l.l_x},     {"l_u", l.l_u},     {"l_reg", l.l_reg},
          {"ssl", l.ssl}, {"cl", l.cl}, {"spade", l.spade}, {"total", l.total}};
}

json to_json(const SelectionScores& s) {
  return {{"precision", opt(s.precision)}, {"recall", s.recall}, {"f1", s.f1}};
}

json to_json(const ssl::LossBreakdown& b) {
  return {{"l_x", b.l_x},     {"l_u", b.l_u},     {"l_reg", b.l_reg},
          {"ssl", b.ssl},     {"cl", b.cl},       {"spade", b.spade},
          {"total", b.total}, {"spade_active", b.spade_active}};
}

json to_json(const NetEpochRecord& n) {
  return {{"net", n.net},
          {"losses", to_json(n.losses)},
          {"batches", n.batches},
          {"labeled_size", n.labeled_size},
          {"support_size", n.support_size},
          {"labeled_selection", to_json(n.labeled_selection)},
          {"support_selection", to_json(n.support_selection)},
          {"geometry_skipped", n.geometry_skipped},
          {"envelope_log_volume", opt(n.envelope_log_volume)},
          {"tau_rej", opt(n.tau_rej)},
          {"n_candidates", n.n_candidates},
          {"n_outliers_accepted", n.n_outliers_accepted},
          {"mean_clean_energy", opt(n.mean_clean_energy)},
          {"mean_outlier_energy", opt(n.mean_outlier_energy)},
          {"first_batch", n.first_batch ? to_json(*n.first_batch) : json(nullptr)}};
}

template <typename F>
double mean_of(const std::vector<NetEpochRecord>& nets, F&& f) {
  if (nets.empty()) return 0.0;
  double s = 0.0;
  for (const auto& n : nets) s += static_cast<double>(f(n));
  return s / static_cast<double>(nets.size());
}

// Mean over the networks that have a value.
template <typename F>
std::optional<double> mean_present(const std::vector<NetEpochRecord>& nets, F&& f) {
  double s = 0.0;
  int k = 0;
  for (const auto& n : nets) {
    if (const std::optional<double> v = f(n)) {
      s += *v;
      ++k;
    }
  }
  if (k == 0) return std::nullopt;
  return s / k;
}

SelectionScores mean_selection(const std::vector<NetEpochRecord>& nets,
                               const SelectionScores NetEpochRecord::*field) {
  SelectionScores out;
  out.precision = mean_present(nets, [&](const NetEpochRecord& n) { return (n.*field).precision; });
  out.recall = mean_of(nets, [&](const NetEpochRecord& n) { return (n.*field).recall; });
  out.f1 = mean_of(nets, [&](const NetEpochRecord& n) { return (n.*field).f1; });
  return out;
}

}  // namespace

LossMeans EpochRecord::losses() const {
  LossMeans m;
  m.gce = mean_of(nets, [](const auto& n) { return n.losses.gce; });
  m.l_x = mean_of(nets, [](const auto& n) { return n.losses.l_x; });
  m.l_u = mean_of(nets, [](const auto& n) { return n.losses.l_u; });
  m.l_reg = mean_of(nets, [](const auto& n) { return n.losses.l_reg; });
  m.ssl = mean_of(nets, [](const auto& n) { return n.losses.ssl; });
  m.cl = mean_of(nets, [](const auto& n) { return n.losses.cl; });
  m.spade = mean_of(nets, [](const auto& n) { return n.losses.spade; });
  m.total = mean_of(nets, [](const auto& n) { return n.losses.total; });
  return m;
}

double EpochRecord::labeled_size() const {
  return mean_of(nets, [](const auto& n) { return n.labeled_size; });
}

double EpochRecord::support_size() const {
  return mean_of(nets, [](const auto& n) { return n.support_size; });
}

SelectionScores EpochRecord::labeled_selection() const {
  return mean_selection(nets, &NetEpochRecord::labeled_selection);
}

SelectionScores EpochRecord::support_selection() const {
  return mean_selection(nets, &NetEpochRecord::support_selection);
}

std::optional<double> EpochRecord::envelope_log_volume() const {
  return mean_present(nets, [](const auto& n) { return n.envelope_log_volume; });
}

double EpochRecord::n_outliers_accepted() const {
  return mean_of(nets, [](const auto& n) { return n.n_outliers_accepted; });
}

std::optional<double> EpochRecord::mean_clean_energy() const {
  return mean_present(nets, [](const auto& n) { return n.mean_clean_energy; });
}

std::optional<double> EpochRecord::mean_outlier_energy() const {
  return mean_present(nets, [](const auto& n) { return n.mean_outlier_energy; });
}

json to_json(const EpochRecord& r) {
  json nets = json::array();
  for (const auto& n : r.nets) nets.push_back(to_json(n));
  return {{"epoch", r.epoch},
          {"phase", r.phase},
          {"losses", to_json(r.losses())},
          {"labeled_size", r.labeled_size()},
          {"support_size", r.support_size()},
          {"labeled_selection", to_json(r.labeled_selection())},
          {"support_selection", to_json(r.support_selection())},
          {"envelope_log_volume", opt(r.envelope_log_volume())},
          {"n_outliers_accepted", r.n_outliers_accepted()},
          {"mean_clean_energy", opt(r.mean_clean_energy())},
          {"mean_outlier_energy", opt(r.mean_outlier_energy())},
          {"test_accuracy", r.test_accuracy},
          {"nets", nets}};
}

json to_json(const RunReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs) epochs.push_back(to_json(e));
  auto ood = [](const std::optional<OodMetrics>& m) {
    return m ? json{{"auroc", m->auroc}, {"fpr95", m->fpr95}} : json(nullptr);
  };
  return {{"schema_version", kReportSchemaVersion},
          {"complete", report.complete},
          {"error", report.error},
          {"config", to_json(report.config)},
          {"epochs", epochs},
          {"summary",
           {{"best_accuracy", report.summary.best_accuracy},
            {"final_accuracy", report.summary.final_accuracy},
            {"final_support_f1", report.summary.final_support_f1},
            {"ood", {{"far", ood(report.summary.far)}, {"near", ood(report.summary.near)}}}}}};
}

std::string serialize(const RunReport& report) { return to_json(report).dump(2) + "\n"; }

namespace {

using Check = std::function<bool(const json&)>;

const Check kNumber = [](const json& j) { return j.is_number(); };
const Check kInteger = [](const json& j) { return j.is_number_integer(); };
const Check kBool = [](const json& j) { return j.is_boolean(); };
const Check kString = [](const json& j) { return j.is_string(); };
const Check kNullableNumber = [](const json& j) { return j.is_null() || j.is_number(); };

void require(const json& obj, const std::string& where, const std::string& key, const Check& check,
             std::vector<std::string>& errors) {
  if (!obj.is_object() || !obj.contains(key)) {
    errors.push_back(where + ": missing '" + key + "'");
  } else if (!check(obj.at(key))) {
    errors.push_back(where + ": '" + key + "' has the wrong type");
  }
}

void check_losses(const json& j, const std::string& where, std::vector<std::string>& errors) {
  for (const char* k : {"gce", "l_x", "l_u", "l_reg", "ssl", "cl", "spade", "total"}) {
    require(j, where, k, kNumber, errors);
  }
}

void check_selection(const json& j, const std::string& where, std::vector<std::string>& errors) {
  require(j, where, "precision", kNullableNumber, errors);
  require(j, where, "recall", kNumber, errors);
  require(j, where, "f1", kNumber, errors);
}

}  // namespace

std::vector<std::string> validate_report(const json& doc) {
  std::vector<std::string> errors;
  if (!doc.is_object()) return {"report is not an object"};
  require(doc, "report", "schema_version", kInteger, errors);
  if (doc.contains("schema_version") && doc["schema_version"] != kReportSchemaVersion) {
    errors.push_back("report: unsupported schema_version");
  }
  require(doc, "report", "complete", kBool, errors);
  require(doc, "report", "error", kString, errors);
  require(doc, "report", "config", [](const json& j) { return j.is_object(); }, errors);
  if (doc.contains("config") && doc["config"].is_object()) {
    try {
      config_from_json(doc["config"]);
    } catch (const std::exception& e) {
      errors.push_back(std::string("report.config: ") + e.what());
    }
  }
  require(doc, "report", "epochs", [](const json& j) { return j.is_array(); }, errors);
  if (doc.contains("epochs") && doc["epochs"].is_array()) {
    int expected = 0;
    for (const auto& e : doc["epochs"]) {
      const std::string where = "epochs[" + std::to_string(expected) + "]";
      require(e, where, "epoch", kInteger, errors);
      if (e.contains("epoch") && e["epoch"] != expected) errors.push_back(where + ": epochs out of order");
      require(e, where, "phase", [](const json& j) { return j == "warmup" || j == "train"; }, errors);
      require(e, where, "losses", [](const json& j) { return j.is_object(); }, errors);
      if (e.contains("losses")) check_losses(e["losses"], where + ".losses", errors);
      for (const char* k : {"labeled_size", "support_size", "n_outliers_accepted", "test_accuracy"}) {
        require(e, where, k, kNumber, errors);
      }
      for (const char* k : {"envelope_log_volume", "mean_clean_energy", "mean_outlier_energy"}) {
        require(e, where, k, kNullableNumber, errors);
      }
      for (const char* k : {"labeled_selection", "support_selection"}) {
        require(e, where, k, [](const json& j) { return j.is_object(); }, errors);
        if (e.contains(k)) check_selection(e[k], where + "." + k, errors);
      }
      require(e, where, "nets", [](const json& j) { return j.is_array() && !j.empty(); }, errors);
      if (e.contains("nets") && e["nets"].is_array()) {
        for (const auto& n : e["nets"]) {
          const std::string nw = where + ".nets";
          require(n, nw, "net", kInteger, errors);
          require(n, nw, "losses", [](const json& j) { return j.is_object(); }, errors);
          if (n.contains("losses")) check_losses(n["losses"], nw + ".losses", errors);
          require(n, nw, "geometry_skipped", kBool, errors);
          for (const char* k : {"batches", "labeled_size", "support_size", "n_candidates", "n_outliers_accepted"}) {
            require(n, nw, k, kInteger, errors);
          }
          for (const char* k : {"envelope_log_volume", "tau_rej", "mean_clean_energy", "mean_outlier_energy"}) {
            require(n, nw, k, kNullableNumber, errors);
          }
          require(n, nw, "first_batch", [](const json& j) { return j.is_null() || j.is_object(); }, errors);
        }
      }
      ++expected;
    }
  }
  require(doc, "report", "summary", [](const json& j) { return j.is_object(); }, errors);
  if (doc.contains("summary") && doc["summary"].is_object()) {
    const auto& s = doc["summary"];
    for (const char* k : {"best_accuracy", "final_accuracy", "final_support_f1"}) require(s, "summary", k, kNumber, errors);
    require(s, "summary", "ood", [](const json& j) { return j.is_object(); }, errors);
    if (s.contains("ood") && s["ood"].is_object()) {
      for (const char* regime : {"far", "near"}) {
        require(s["ood"], "summary.ood", regime, [](const json& j) { return j.is_null() || j.is_object(); }, errors);
        const auto& m = s["ood"].value(regime, json(nullptr));
        if (m.is_object()) {
          require(m, std::string("summary.ood.") + regime, "auroc", kNumber, errors);
          require(m, std::string("summary.ood.") + regime, "fpr95", kNumber, errors);
        }
      }
    }
  }
  return errors;
}

}  // namespace nlvos::harness
