#pragma once

#include <cstdint>
#include <random>

namespace flavent {

using Rng = std::mt19937_64;

/// Independent, reproducible sub-stream for (master seed, stream index, purpose).
/// `purpose` separates consumers that share a stream index (data vs. MC vs.
/// templates) so adding one never shifts another's sequence.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t stream,
                       std::uint64_t purpose = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(purpose),
                    static_cast<std::uint32_t>(purpose >> 32)};
  return Rng(seq);
}

}  // namespace flavent
