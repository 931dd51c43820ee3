#include "convect_uq/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace convect_uq {

spdlog::logger& logger() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto log = spdlog::stderr_color_mt("convect_uq");
        log->set_pattern("[%l] %v");
        spdlog::level::level_enum level = spdlog::level::warn;
        if (const char* env = std::getenv("CONVECT_UQ_LOG")) {
            const std::string value(env);
            if (value == "error") level = spdlog::level::err;
            else if (value == "warn") level = spdlog::level::warn;
            else if (value == "info") level = spdlog::level::info;
            else if (value == "debug") level = spdlog::level::debug;
        }
        log->set_level(level);
        return log;
    }();
    return *instance;
}

}  // namespace convect_uq
