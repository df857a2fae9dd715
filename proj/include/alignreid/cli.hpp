#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace areid::cli {

// Exit statuses, one per failure class.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kBadConfig = 2;
inline constexpr int kMissingFile = 3;
inline constexpr int kPrecondition = 4;
inline constexpr int kDiverged = 5;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace areid::cli
