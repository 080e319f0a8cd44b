// SPDX-License-Identifier: Apache-2.0

#include "core/log.hpp"

#include <iostream>
#include <mutex>

namespace mdap {

namespace {

std::mutex g_mutex;
LogSink g_sink;

void default_sink(LogLevel level, const std::string& message) {
    if (level >= LogLevel::warning) {
        std::cerr << (level == LogLevel::error ? "error: " : "warning: ") << message << '\n';
    }
}

} // namespace

void set_log_sink(LogSink sink) {
    std::lock_guard lock(g_mutex);
    g_sink = std::move(sink);
}

void log_message(LogLevel level, const std::string& message) {
    std::lock_guard lock(g_mutex);
    if (g_sink) {
        g_sink(level, message);
    } else {
        default_sink(level, message);
    }
}

} // namespace mdap
