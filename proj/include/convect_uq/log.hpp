#pragma once

#include <spdlog/spdlog.h>

namespace convect_uq {

/// Process-wide logger writing to stderr; level taken from CONVECT_UQ_LOG
/// (error, warn, info, debug), default warn.
spdlog::logger& logger();

}  // namespace convect_uq
