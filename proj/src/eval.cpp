#include "cyclonet/eval.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cyclonet/errors.hpp"
#include "cyclonet/taxonomy.hpp"

namespace cyclonet {

namespace {

void require_pair(const char* op, std::span<const double> yhat, std::span<const double> y,
                  std::size_t min_n) {
  if (yhat.size() != y.size()) {
    throw ShapeError(std::string(op) + ": prediction count " + std::to_string(yhat.size()) +
                     " does not match label count " + std::to_string(y.size()));
  }
  if (yhat.size() < min_n) {
    throw DataError(std::string(op) + ": need at least " + std::to_string(min_n) +
                    " samples, got " + std::to_string(yhat.size()));
  }
}

}  // namespace

double rmse(std::span<const double> yhat, std::span<const double> y) {
  require_pair("rmse", yhat, y, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = yhat[i] - y[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(y.size()));
}

double mae(std::span<const double> yhat, std::span<const double> y) {
  require_pair("mae", yhat, y, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(yhat[i] - y[i]);
  return acc / static_cast<double>(y.size());
}

double bias(std::span<const double> yhat, std::span<const double> y) {
  require_pair("bias", yhat, y, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += yhat[i] - y[i];
  return acc / static_cast<double>(y.size());
}

double relative_rmse(std::span<const double> yhat, std::span<const double> y) {
  require_pair("relative_rmse", yhat, y, 2);
  double sq = 0.0, mean_pred = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = yhat[i] - y[i];
    sq += d * d;
    mean_pred += yhat[i];
  }
  mean_pred /= static_cast<double>(y.size());
  if (mean_pred == 0.0) throw DataError("relative_rmse: mean prediction is zero");
  return std::sqrt(sq / static_cast<double>(y.size() - 1)) / mean_pred;
}

ClassReport confusion_and_report(std::span<const double> yhat, std::span<const double> y) {
  require_pair("confusion_and_report", yhat, y, 1);
  ClassReport report;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int t = static_cast<int>(categorize(y[i])) - 1;
    const int p = static_cast<int>(categorize(yhat[i])) - 1;
    report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
  }

  double precision_sum = 0.0, recall_sum = 0.0, f1_sum = 0.0;
  int present = 0;
  for (int c = 0; c < kCategoryCount; ++c) {
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < kCategoryCount; ++k) {
      row += report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
      col += report.confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
    }
    if (row == 0) continue;  // macro averages run over categories present in the truth
    ++present;
    const std::int64_t tp = report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    const double precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    const double recall = static_cast<double>(tp) / static_cast<double>(row);
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    precision_sum += precision;
    recall_sum += recall;
    f1_sum += f1;
  }
  if (present > 0) {
    report.precision = precision_sum / present;
    report.recall = recall_sum / present;
    report.f1 = f1_sum / present;
  }
  return report;
}

EvalReport evaluate(const DatasetIndex& dataset, const BatchPredictor& predictor) {
  if (dataset.samples.empty()) throw DataError("evaluate: empty dataset");
  const std::vector<double> yhat = predictor(dataset.samples);
  if (yhat.size() != dataset.samples.size()) {
    throw ShapeError("evaluate: predictor returned " + std::to_string(yhat.size()) +
                     " values for " + std::to_string(dataset.samples.size()) + " samples");
  }
  std::vector<double> y;
  y.reserve(dataset.samples.size());
  for (const CycloneSample& s : dataset.samples) y.push_back(s.wind_speed);

  EvalReport report;
  report.n = static_cast<std::int64_t>(y.size());
  report.rmse = rmse(yhat, y);
  report.mae = mae(yhat, y);
  report.bias = bias(yhat, y);
  report.relative_rmse = y.size() >= 2 ? relative_rmse(yhat, y)
                                       : std::numeric_limits<double>::quiet_NaN();
  report.cls = confusion_and_report(yhat, y);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& row : report.cls.confusion) confusion.push_back(row);
  std::vector<std::string> codes;
  for (const CategoryInfo& c : category_table()) codes.emplace_back(c.code);
  const nlohmann::json j{{"n", report.n},
                         {"rmse", report.rmse},
                         {"mae", report.mae},
                         {"bias", report.bias},
                         {"relative_rmse", report.relative_rmse},
                         {"categories", codes},
                         {"confusion", confusion},
                         {"precision", report.cls.precision},
                         {"recall", report.cls.recall},
                         {"f1", report.cls.f1}};
  return j.dump(2);
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream os;
  char line[96];
  os << "Evaluation Metric    Value\n";
  os << "-------------------  ---------\n";
  std::snprintf(line, sizeof(line), "%-20s %9.2f\n", "RMSE", report.rmse);
  os << line;
  std::snprintf(line, sizeof(line), "%-20s %9.2f\n", "MAE", report.mae);
  os << line;
  std::snprintf(line, sizeof(line), "%-20s %9.2f\n", "Bias", report.bias);
  os << line;
  std::snprintf(line, sizeof(line), "%-20s %9.2f\n", "Relative RMSE", report.relative_rmse);
  os << line;
  os << '\n';
  os << "Confusion matrix (rows: true, cols: predicted)\n      ";
  for (const CategoryInfo& c : category_table()) {
    std::snprintf(line, sizeof(line), "%7s", c.code);
    os << line;
  }
  os << '\n';
  for (int t = 0; t < kCategoryCount; ++t) {
    std::snprintf(line, sizeof(line), "%5s ", category_table()[static_cast<std::size_t>(t)].code);
    os << line;
    for (int p = 0; p < kCategoryCount; ++p) {
      std::snprintf(line, sizeof(line), "%7lld",
                    static_cast<long long>(
                        report.cls.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]));
      os << line;
    }
    os << '\n';
  }
  std::snprintf(line, sizeof(line),
                "\nPrecision %.2f  Recall %.2f  F1 %.2f  (macro, N=%lld)\n",
                report.cls.precision, report.cls.recall, report.cls.f1,
                static_cast<long long>(report.n));
  os << line;
  return os.str();
}

}  // namespace cyclonet
