#pragma once

#include <string>

namespace layerstack {

// Diagnostics go to stderr; set quiet to suppress warnings (tests, sweeps).
void log_warning(const std::string& message);
void set_quiet(bool quiet);

}  // namespace layerstack
