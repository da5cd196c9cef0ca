#pragma once

#include <array>
#include <string>

namespace cyclonet {

// Saffir-Simpson intensity scale. Integer knot rows extend to half-open real
// intervals so fractional gate outputs categorize unambiguously; each
// boundary belongs to the upper category (34.0 is a tropical storm).
enum class Category : int { TD = 1, TS, H1, H2, H3, H4, H5 };

struct CategoryInfo {
  Category category;
  const char* code;   // TD, TS, H1..H5
  const char* name;
  double lo;  // inclusive, knots
  double hi;  // exclusive, knots; +inf for the top category
};

// Ascending intensity order: [0,34), [34,64), [64,83), [83,96), [96,113),
// [113,137), [137,inf).
const std::array<CategoryInfo, 7>& category_table();

const CategoryInfo& info(Category category);

// The unique category whose interval contains the speed. Throws DataError
// for nonpositive speeds.
Category categorize(double speed_knots);

// Parses "TD".."H5"; throws ConfigError on anything else.
Category category_from_code(const std::string& code);

enum class OverlapPolicy { None, OneThirdAdjacent };

// Training range for one category's expert. Policy None returns the nominal
// interval. OneThirdAdjacent extends each side into the neighboring category
// by one-third of that neighbor's own nominal width; the lowest category has
// no lower extension and the top category no upper one. The top category's
// nominal width uses dataset_max_speed as its upper edge.
std::pair<double, double> expert_range(Category category, double dataset_max_speed,
                                       OverlapPolicy policy);

}  // namespace cyclonet
