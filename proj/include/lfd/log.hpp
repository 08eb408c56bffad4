#pragma once

namespace lfd {

/// Sets the log level from LS_LOG (trace, debug, info, warn, error, off); default warn.
void init_logging();

}  // namespace lfd
