#pragma once

namespace splitwire {

// Sets the spdlog level from SPLITWIRE_LOG (trace, debug, info, warn, error,
// critical, off). Unset or unknown values mean "warn". Logs go to stderr.
void init_logging();

}  // namespace splitwire
