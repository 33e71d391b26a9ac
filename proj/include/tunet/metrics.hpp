#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace tunet {

inline const std::vector<double> kDefaultApThresholds = {0.5, 0.6, 0.7, 0.8, 0.9};

// Fraction of positions where pred == truth.
double per_series_accuracy(std::span<const int> pred, std::span<const int> truth);

// Share of series whose accuracy is >= a (the boundary counts as a pass).
double ap_at(std::span<const double> per_series_acc, double a);

struct ApReport {
  std::vector<double> thresholds;
  std::vector<double> ap_values;
  double mean_ap = 0.0;
  std::size_t num_series = 0;
  std::vector<double> per_series_acc;
};

ApReport make_ap_report(std::span<const double> per_series_acc,
                        std::span<const double> thresholds = kDefaultApThresholds);

double mean_ap(const ApReport& report);
double mean_ap(std::span<const double> ap_values);

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // (true, predicted) row-major
  std::vector<std::string> class_names;

  std::size_t operator()(std::size_t truth, std::size_t pred) const { return counts[truth * num_classes + pred]; }
  std::size_t total() const;
  std::size_t row_sum(std::size_t truth) const;
  double accuracy() const;  // trace / total
  // Row-normalized view; empty rows stay zero.
  std::vector<double> row_normalized() const;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, std::size_t num_classes);

// Accumulates `preds` vs `truths` into an existing matrix.
void accumulate(ConfusionMatrix& matrix, std::span<const int> preds, std::span<const int> truths);

// Default names: "non-action" followed by "action" (2 classes) or "class-<k>".
std::vector<std::string> default_class_names(std::size_t num_classes);

struct EvalReport {
  double pooled_accuracy = 0.0;       // all samples pooled (headline)
  double mean_series_accuracy = 0.0;  // average of per-series accuracies
  ApReport ap;
  ConfusionMatrix confusion;
};

// Human-readable table followed by a machine-readable CSV block.
void write_report(std::ostream& out, const EvalReport& report);

}  // namespace tunet
