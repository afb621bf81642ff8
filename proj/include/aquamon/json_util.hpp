#pragma once

#include <string_view>

#include <json.hpp>

namespace aquamon {

// Parses JSON and rejects objects that repeat a key. Errors are Errc::config.
nlohmann::json parse_json_strict(std::string_view text, std::string_view what);

}  // namespace aquamon
