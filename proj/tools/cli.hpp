#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfeat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // bad flags, bad config
inline constexpr int kExitData = 2;   // unreadable data, bad model, numeric failure

/// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sfeat::cli
