#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flavent {

/// Strictly increasing dt bin edges in ps, first edge >= 0.
class Binning {
 public:
  /// The 11 variable-width windows 0, 0.5, 1, 2, ..., 7, 9, 13, 20 ps.
  Binning();
  explicit Binning(std::vector<double> edges);

  std::size_t size() const { return edges_.size() - 1; }
  double lo(std::size_t i) const { return edges_[i]; }
  double hi(std::size_t i) const { return edges_[i + 1]; }
  std::span<const double> edges() const { return edges_; }

  /// Bin containing dt, or nullopt outside [first edge, last edge).
  std::optional<std::size_t> find(double dt) const;

  /// Comma-separated edges, shortest round-trip formatting.
  std::string to_string() const;

  friend bool operator==(const Binning&, const Binning&) = default;

 private:
  std::vector<double> edges_;
};

}  // namespace flavent
