#pragma once

#include <string_view>

namespace vogcl {

// Warnings go to stderr unless silenced (tests silence them).
void log_warning(std::string_view message);
void set_warnings_enabled(bool enabled);

}  // namespace vogcl
