#pragma once

#include <epr/cli/config.hpp>

namespace epr::cli {

// Exit codes: 0 success, 1 evaluation failure, 2 finished but some point
// carries an accuracy warning, 3 configuration or usage error.
int run_cli(int argc, char** argv);

} // namespace epr::cli
