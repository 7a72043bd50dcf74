#ifndef LIFTKB_CLI_HPP
#define LIFTKB_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace liftkb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace liftkb::cli

#endif  // LIFTKB_CLI_HPP
