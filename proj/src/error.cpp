#include "aquamon/error.hpp"

namespace aquamon {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_input: return "invalid_input";
        case Errc::parse: return "parse";
        case Errc::schema: return "schema";
        case Errc::empty_dataset: return "empty_dataset";
        case Errc::no_data: return "no_data";
        case Errc::split: return "split";
        case Errc::alignment: return "alignment";
        case Errc::shape: return "shape";
        case Errc::parameter: return "parameter";
        case Errc::divergence: return "divergence";
        case Errc::integrity: return "integrity";
        case Errc::version: return "version";
        case Errc::not_found: return "not_found";
        case Errc::conflict: return "conflict";
        case Errc::safety_rejection: return "safety_rejection";
        case Errc::config: return "config";
        case Errc::encode: return "encode";
        case Errc::startup: return "startup";
        case Errc::io: return "io";
    }
    return "unknown";
}

}  // namespace aquamon
