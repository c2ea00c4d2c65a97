#include "hcmen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hcmen/error.hpp"

namespace hcmen {

namespace {

struct BinaryCounts {
  // [truth][pred], class 1 = positive side
  std::size_t table[2][2] = {{0, 0}, {0, 0}};
  std::size_t total = 0;

  void add(bool truth, bool pred) {
    ++table[truth ? 1 : 0][pred ? 1 : 0];
    ++total;
  }
  double accuracy() const {
    return total ? static_cast<double>(table[0][0] + table[1][1]) / static_cast<double>(total) : 0.0;
  }
  double weighted_f1() const {
    if (!total) return 0.0;
    double f1 = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double tp = static_cast<double>(table[c][c]);
      const double fp = static_cast<double>(table[1 - c][c]);
      const double fn = static_cast<double>(table[c][1 - c]);
      const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
      const double support = tp + fn;
      f1 += support / static_cast<double>(total) * f;
    }
    return f1;
  }
};

double rounded_class(double v, double bound) { return std::round(std::clamp(v, -bound, bound)); }

}  // namespace

MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw DimensionError("compute_metrics: need equal, non-empty prediction and label lists");
  }
  const std::size_t n = preds.size();
  MetricsReport r;
  r.count = n;

  std::size_t hits7 = 0, hits5 = 0;
  BinaryCounts has0, non0;
  double abs_err = 0.0, mean_p = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = preds[i], y = labels[i];
    hits7 += rounded_class(p, 3.0) == rounded_class(y, 3.0);
    hits5 += rounded_class(p, 2.0) == rounded_class(y, 2.0);
    has0.add(y >= 0.0, p >= 0.0);
    if (y != 0.0) non0.add(y > 0.0, p > 0.0);
    abs_err += std::abs(p - y);
    mean_p += p;
    mean_y += y;
  }
  const double count = static_cast<double>(n);
  r.acc7 = static_cast<double>(hits7) / count;
  r.acc5 = static_cast<double>(hits5) / count;
  r.acc2_has0 = has0.accuracy();
  r.acc2_non0 = non0.accuracy();
  r.f1_has0 = has0.weighted_f1();
  r.f1_non0 = non0.weighted_f1();
  r.mae = abs_err / count;

  mean_p /= count;
  mean_y /= count;
  double cov = 0.0, var_p = 0.0, var_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = preds[i] - mean_p, dy = labels[i] - mean_y;
    cov += dp * dy;
    var_p += dp * dp;
    var_y += dy * dy;
  }
  if (var_p > 0.0 && var_y > 0.0) {
    r.corr = std::clamp(cov / std::sqrt(var_p * var_y), -1.0, 1.0);
  } else {
    r.corr = 0.0;
    r.corr_undefined = true;
  }
  return r;
}

std::string metrics_csv_header(const std::string& prefix) {
  std::ostringstream os;
  const char* names[] = {"mae", "acc7", "acc5", "acc2_has0", "acc2_non0", "f1_has0", "f1_non0", "corr"};
  for (std::size_t i = 0; i < std::size(names); ++i) {
    if (i) os << ',';
    os << prefix << names[i];
  }
  return os.str();
}

std::string metrics_csv_row(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.mae, r.acc7, r.acc5,
                r.acc2_has0, r.acc2_non0, r.f1_has0, r.f1_non0, r.corr);
  return buf;
}

std::string format_report(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "n=%zu  Acc-7 %.2f  Acc-5 %.2f  Acc-2 %.2f / %.2f  F1 %.2f / %.2f  MAE %.4f  "
                "Corr %.4f%s",
                r.count, 100 * r.acc7, 100 * r.acc5, 100 * r.acc2_has0, 100 * r.acc2_non0,
                100 * r.f1_has0, 100 * r.f1_non0, r.mae, r.corr,
                r.corr_undefined ? " (corr undefined: constant series)" : "");
  return buf;
}

}  // namespace hcmen
