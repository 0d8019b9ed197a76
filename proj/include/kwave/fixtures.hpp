#pragma once

#include <string>
#include <vector>

#include "kwave/system.hpp"

namespace kwave {

std::vector<std::string> fixture_names();
/// JSON text of a bundled system definition; throws for unknown names.
const std::string& fixture_text(const std::string& name);
SystemFile load_fixture(const std::string& name);

}  // namespace kwave
