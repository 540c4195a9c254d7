#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pipefuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point shared by the `pipefuse` binary and the tests. `args`
/// excludes the program name. Errors go to `err` as
/// `error[<category>]: <message>`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pipefuse::cli
