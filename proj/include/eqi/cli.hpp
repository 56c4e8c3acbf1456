#pragma once

namespace eqi {

// Exit codes: 0 success, 1 usage error, 2 data/integrity error.
int cli_main(int argc, const char* const* argv);

}  // namespace eqi
