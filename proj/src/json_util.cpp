#include "aquamon/json_util.hpp"

#include <set>
#include <string>
#include <vector>

#include "aquamon/error.hpp"

namespace aquamon {

nlohmann::json parse_json_strict(std::string_view text, std::string_view what) {
    std::vector<std::set<std::string>> scopes;
    std::string duplicate;
    auto cb = [&](int, nlohmann::json::parse_event_t ev, nlohmann::json& parsed) {
        using E = nlohmann::json::parse_event_t;
        if (ev == E::object_start) {
            scopes.emplace_back();
        } else if (ev == E::object_end) {
            if (!scopes.empty()) scopes.pop_back();
        } else if (ev == E::key && !scopes.empty()) {
            auto key = parsed.get<std::string>();
            if (!scopes.back().insert(key).second && duplicate.empty()) duplicate = key;
        }
        return true;
    };
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text.begin(), text.end(), cb);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::config, std::string(what) + ": malformed document: " + e.what());
    }
    if (!duplicate.empty()) {
        throw Error(Errc::config, std::string(what) + ": duplicate key '" + duplicate + "'");
    }
    return doc;
}

}  // namespace aquamon
