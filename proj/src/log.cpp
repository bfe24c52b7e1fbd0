#include "g2sim/log.hpp"

#include <iostream>
#include <mutex>

namespace g2sim {

namespace {

std::mutex g_mutex;
WarningHandler g_handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(g_mutex);
    auto previous = std::move(g_handler);
    g_handler = std::move(handler);
    return previous;
}

void warn(std::string_view message) {
    std::lock_guard lock(g_mutex);
    if (g_handler) g_handler(message);
}

}  // namespace g2sim
