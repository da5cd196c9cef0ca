#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "cyclonet/dataset.hpp"

namespace cyclonet {

// Error metrics over paired prediction/label vectors, in knots unless noted.

// sqrt((1/N) sum (yhat_i - y_i)^2)
double rmse(std::span<const double> yhat, std::span<const double> y);

// (1/N) sum |yhat_i - y_i|
double mae(std::span<const double> yhat, std::span<const double> y);

// (1/N) sum (yhat_i - y_i)
double bias(std::span<const double> yhat, std::span<const double> y);

// (1/avg(yhat)) * sqrt(sum (yhat_i - y_i)^2 / (N-1)), dimensionless.
// Requires N >= 2 and a nonzero mean prediction.
double relative_rmse(std::span<const double> yhat, std::span<const double> y);

inline constexpr int kCategoryCount = 7;

struct ClassReport {
  // confusion[true][predicted], categories in ascending intensity order
  std::array<std::array<std::int64_t, kCategoryCount>, kCategoryCount> confusion{};
  // macro averages over the categories present in the true labels; a class
  // with no predicted samples contributes zero precision
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Categorizes both vectors on the intensity scale and tabulates the
// confusion matrix plus macro precision/recall/F1.
ClassReport confusion_and_report(std::span<const double> yhat, std::span<const double> y);

struct EvalReport {
  double rmse = 0;
  double mae = 0;
  double bias = 0;
  double relative_rmse = 0;
  ClassReport cls;
  std::int64_t n = 0;
};

// Predicts every sample with one batched predictor call and computes all
// metrics from the same prediction vector.
using BatchPredictor = std::function<std::vector<double>(std::span<const CycloneSample>)>;
EvalReport evaluate(const DatasetIndex& dataset, const BatchPredictor& predictor);

std::string report_to_json(const EvalReport& report);

// Plain-text table with one row per error metric plus the classification
// summary.
std::string report_to_table(const EvalReport& report);

}  // namespace cyclonet
