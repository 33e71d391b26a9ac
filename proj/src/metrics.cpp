#include "tunet/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <ostream>

#include "tunet/errors.hpp"

namespace tunet {

double per_series_accuracy(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("per_series_accuracy: " + std::to_string(pred.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw ShapeError("per_series_accuracy: empty series");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double ap_at(std::span<const double> per_series_acc, double a) {
  if (per_series_acc.empty()) throw DataError("ap_at: no series");
  std::size_t passed = 0;
  for (const double acc : per_series_acc) passed += acc >= a ? 1 : 0;
  return static_cast<double>(passed) / static_cast<double>(per_series_acc.size());
}

double mean_ap(std::span<const double> ap_values) {
  if (ap_values.empty()) return 0.0;
  return std::accumulate(ap_values.begin(), ap_values.end(), 0.0) / static_cast<double>(ap_values.size());
}

double mean_ap(const ApReport& report) { return mean_ap(report.ap_values); }

ApReport make_ap_report(std::span<const double> per_series_acc, std::span<const double> thresholds) {
  ApReport report;
  report.thresholds.assign(thresholds.begin(), thresholds.end());
  report.per_series_acc.assign(per_series_acc.begin(), per_series_acc.end());
  report.num_series = per_series_acc.size();
  for (const double a : thresholds) {
    if (a < 0.0 || a > 1.0) throw ConfigError("AP threshold " + std::to_string(a) + " outside [0, 1]");
    report.ap_values.push_back(ap_at(per_series_acc, a));
  }
  report.mean_ap = mean_ap(report.ap_values);
  return report;
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < num_classes; ++p) s += (*this)(truth, p);
  return s;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t trace = 0;
  for (std::size_t c = 0; c < num_classes; ++c) trace += (*this)(c, c);
  return static_cast<double>(trace) / static_cast<double>(n);
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (std::size_t r = 0; r < num_classes; ++r) {
    const std::size_t sum = row_sum(r);
    if (sum == 0) continue;
    for (std::size_t p = 0; p < num_classes; ++p) {
      out[r * num_classes + p] = static_cast<double>((*this)(r, p)) / static_cast<double>(sum);
    }
  }
  return out;
}

std::vector<std::string> default_class_names(std::size_t num_classes) {
  std::vector<std::string> names{"non-action"};
  if (num_classes == 2) {
    names.emplace_back("action");
    return names;
  }
  for (std::size_t k = 1; k < num_classes; ++k) names.push_back("class-" + std::to_string(k));
  return names;
}

void accumulate(ConfusionMatrix& matrix, std::span<const int> preds, std::span<const int> truths) {
  if (preds.size() != truths.size()) {
    throw ShapeError("confusion: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(truths.size()) + " labels");
  }
  const auto k = static_cast<int>(matrix.num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= k || truths[i] < 0 || truths[i] >= k) {
      throw DataError("confusion: class out of range at position " + std::to_string(i));
    }
    ++matrix.counts[static_cast<std::size_t>(truths[i]) * matrix.num_classes + static_cast<std::size_t>(preds[i])];
  }
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t num_classes) {
  ConfusionMatrix m{num_classes, std::vector<std::size_t>(num_classes * num_classes, 0),
                    default_class_names(num_classes)};
  accumulate(m, preds, truths);
  return m;
}

void write_report(std::ostream& out, const EvalReport& r) {
  char buf[128];
  out << "Overall sample accuracy (pooled): ";
  std::snprintf(buf, sizeof(buf), "%.2f%%\n", 100.0 * r.pooled_accuracy);
  out << buf;
  std::snprintf(buf, sizeof(buf), "Mean per-series accuracy:         %.2f%%\n", 100.0 * r.mean_series_accuracy);
  out << buf;
  out << "Series evaluated: " << r.ap.num_series << "\n\n";

  out << "  a     AP@a\n";
  for (std::size_t i = 0; i < r.ap.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "  %.2f  %.2f\n", r.ap.thresholds[i], r.ap.ap_values[i]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "  mean  %.2f\n\n", r.ap.mean_ap);
  out << buf;

  const auto& cm = r.confusion;
  const auto norm = cm.row_normalized();
  out << "Confusion matrix (rows = truth, row-normalized):\n";
  for (std::size_t t = 0; t < cm.num_classes; ++t) {
    std::snprintf(buf, sizeof(buf), "  %-12s", cm.class_names[t].c_str());
    out << buf;
    for (std::size_t p = 0; p < cm.num_classes; ++p) {
      std::snprintf(buf, sizeof(buf), " %6.3f", norm[t * cm.num_classes + p]);
      out << buf;
    }
    out << '\n';
  }

  out << "\n# metrics csv\n";
  for (std::size_t i = 0; i < r.ap.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "ap,%.2f,%.17g\n", r.ap.thresholds[i], r.ap.ap_values[i]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean_ap,%.17g\n", r.ap.mean_ap);
  out << buf;
  for (std::size_t t = 0; t < cm.num_classes; ++t) {
    out << "confusion," << t;
    for (std::size_t p = 0; p < cm.num_classes; ++p) out << ',' << cm(t, p);
    out << '\n';
  }
  std::snprintf(buf, sizeof(buf), "accuracy,%.17g\n", r.pooled_accuracy);
  out << buf;
  std::snprintf(buf, sizeof(buf), "mean_series_accuracy,%.17g\n", r.mean_series_accuracy);
  out << buf;
}

}  // namespace tunet
