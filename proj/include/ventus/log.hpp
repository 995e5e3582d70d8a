#pragma once

#include <spdlog/spdlog.h>

namespace ventus {

// Installs a stderr logger as the spdlog default. The level is read from
// VENTUS_LOG (error, warn, info, debug); unset means warn.
void init_logging();

}  // namespace ventus
