#include "flavent/binning.hpp"

#include <algorithm>
#include <charconv>

#include "flavent/error.hpp"

namespace flavent {

Binning::Binning() : edges_{0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 9.0, 13.0, 20.0} {}

Binning::Binning(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2) throw ValidationError("binning needs at least two edges");
  if (!(edges_.front() >= 0.0)) throw ValidationError("first bin edge must be >= 0");
  for (std::size_t i = 1; i < edges_.size(); ++i)
    if (!(edges_[i] > edges_[i - 1]))
      throw ValidationError("bin edges must be strictly increasing");
}

std::optional<std::size_t> Binning::find(double dt) const {
  if (!(dt >= edges_.front() && dt < edges_.back())) return std::nullopt;
  auto it = std::upper_bound(edges_.begin(), edges_.end(), dt);
  return static_cast<std::size_t>(it - edges_.begin()) - 1;
}

std::string Binning::to_string() const {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (i) out += ',';
    auto res = std::to_chars(buf, buf + sizeof buf, edges_[i]);
    out.append(buf, res.ptr);
  }
  return out;
}

}  // namespace flavent
