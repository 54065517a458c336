#pragma once

#include <ostream>

namespace ssanet {

// Entry point behind the `ssanet` executable. Results go to `out`, progress
// and the one-line error report ("error: <kind>: <message>") go to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace ssanet
