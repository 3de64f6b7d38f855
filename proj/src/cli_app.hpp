#ifndef OQW_SRC_CLI_APP_HPP
#define OQW_SRC_CLI_APP_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace oqwalk {

// In-process front end shared by the installed binary and the tests.
// `args` excludes the program name.  Reports go to `out`, diagnostics to
// `err`.  Exit codes: 0 all checks pass, 1 a numerical check failed,
// 2 input error, 3 hypothesis violation.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace oqwalk

#endif
