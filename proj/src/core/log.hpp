// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

namespace mdap {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3 };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink. An empty sink restores the default, which
/// writes warnings and errors to stderr.
void set_log_sink(LogSink sink);
void log_message(LogLevel level, const std::string& message);

inline void log_info(const std::string& message) { log_message(LogLevel::info, message); }
inline void log_warning(const std::string& message) { log_message(LogLevel::warning, message); }

} // namespace mdap
