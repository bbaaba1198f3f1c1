#pragma once

#include <string>
#include <vector>

namespace sfl {

// Exit codes: 0 success, 1 validation/usage error, 2 runtime error.
int cli_main(const std::vector<std::string>& args);

}  // namespace sfl
