#pragma once

#include <iosfwd>

namespace siftlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFormat = 3;
inline constexpr int kExitRuntime = 4;
inline constexpr int kExitIo = 5;

/// Entry point behind the `siftlab` binary: gen-trace, fit, compare, mask.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace siftlab::cli
