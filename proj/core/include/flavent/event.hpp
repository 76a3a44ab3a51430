#pragma once

#include <cstdint>
#include <string_view>

#include "flavent/models.hpp"

namespace flavent {

enum class Category { signal, dstar_fake, wrong_combination, dss_charged };

inline constexpr Category kBackgroundCategories[] = {
    Category::dstar_fake, Category::wrong_combination, Category::dss_charged};

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

/// One simulated pair. Background records carry no individual decay times:
/// they store t1 = dt_true and t2 = 0.
struct EventRecord {
  double t1 = 0.0;
  double t2 = 0.0;
  double dt_true = 0.0;
  FlavourClass cls_true = FlavourClass::OF;
  double dz_rec = 0.0;  // um
  double dt_rec = 0.0;  // ps
  FlavourClass cls_assigned = FlavourClass::OF;
  Category category = Category::signal;
  std::uint32_t stream = 0;
  std::uint64_t index = 0;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

}  // namespace flavent
