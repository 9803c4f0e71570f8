#pragma once

#include <ostream>

namespace ncssd {

// Runs the invariant/oracle battery, printing one line per check.
// Returns the number of failed checks.
int run_selftest(std::ostream& out);

}  // namespace ncssd
