#include "cyclonet/taxonomy.hpp"

#include <cmath>
#include <limits>

#include "cyclonet/errors.hpp"

namespace cyclonet {

const std::array<CategoryInfo, 7>& category_table() {
  static const std::array<CategoryInfo, 7> table{{
      {Category::TD, "TD", "Tropical Depression", 0.0, 34.0},
      {Category::TS, "TS", "Tropical Storm", 34.0, 64.0},
      {Category::H1, "H1", "Category 1", 64.0, 83.0},
      {Category::H2, "H2", "Category 2", 83.0, 96.0},
      {Category::H3, "H3", "Category 3", 96.0, 113.0},
      {Category::H4, "H4", "Category 4", 113.0, 137.0},
      {Category::H5, "H5", "Category 5", 137.0, std::numeric_limits<double>::infinity()},
  }};
  return table;
}

const CategoryInfo& info(Category category) {
  return category_table()[static_cast<std::size_t>(static_cast<int>(category) - 1)];
}

Category categorize(double speed_knots) {
  if (!(speed_knots > 0.0)) {
    throw DataError("categorize: wind speed must be positive, got " +
                    std::to_string(speed_knots));
  }
  for (const CategoryInfo& c : category_table()) {
    if (speed_knots >= c.lo && speed_knots < c.hi) return c.category;
  }
  return Category::H5;  // unreachable: the last interval is unbounded
}

Category category_from_code(const std::string& code) {
  for (const CategoryInfo& c : category_table()) {
    if (code == c.code) return c.category;
  }
  throw ConfigError("unknown intensity category code '" + code + "'");
}

std::pair<double, double> expert_range(Category category, double dataset_max_speed,
                                       OverlapPolicy policy) {
  const auto& table = category_table();
  const int idx = static_cast<int>(category) - 1;
  const CategoryInfo& c = table[static_cast<std::size_t>(idx)];
  if (policy == OverlapPolicy::None) return {c.lo, c.hi};

  const auto nominal_width = [&](int i) {
    const CategoryInfo& n = table[static_cast<std::size_t>(i)];
    const double hi = std::isinf(n.hi) ? dataset_max_speed : n.hi;
    return hi - n.lo;
  };
  double lo = c.lo;
  double hi = c.hi;
  if (idx > 0) lo -= nominal_width(idx - 1) / 3.0;
  if (idx + 1 < static_cast<int>(table.size())) hi += nominal_width(idx + 1) / 3.0;
  return {lo, hi};
}

}  // namespace cyclonet
