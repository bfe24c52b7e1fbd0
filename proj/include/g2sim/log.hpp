#pragma once

#include <functional>
#include <string_view>

namespace g2sim {

using WarningHandler = std::function<void(std::string_view)>;

// Replaces the warning sink (default: stderr). Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace g2sim
