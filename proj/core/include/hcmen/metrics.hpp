#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hcmen {

// Sentiment regression metrics. Accuracies and F1 are fractions in [0, 1].
//   acc7 / acc5: rounded, clamped to [-3, 3] / [-2, 2], exact class match
//   *_has0: classes (y < 0) vs (y >= 0) over every sample
//   *_non0: classes (y < 0) vs (y > 0), samples with y == 0 dropped
//   f1_*: support-weighted F1 over the two classes
struct MetricsReport {
  double acc7 = 0.0;
  double acc5 = 0.0;
  double acc2_has0 = 0.0;
  double acc2_non0 = 0.0;
  double f1_has0 = 0.0;
  double f1_non0 = 0.0;
  double mae = 0.0;
  double corr = 0.0;
  // Set when either series is constant; corr is then reported as 0.
  bool corr_undefined = false;
  std::size_t count = 0;
};

MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> labels);

// CSV columns matching metrics_csv_row, without a trailing newline.
std::string metrics_csv_header(const std::string& prefix = "");
std::string metrics_csv_row(const MetricsReport& report);
std::string format_report(const MetricsReport& report);

}  // namespace hcmen
