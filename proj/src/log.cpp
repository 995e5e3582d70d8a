#include "ventus/log.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>

namespace ventus {

void init_logging() {
    auto logger = spdlog::stderr_color_mt("ventus");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("VENTUS_LOG");
    const std::string level = env ? env : "warn";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::warn);
}

}  // namespace ventus
