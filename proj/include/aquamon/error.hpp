#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aquamon {

enum class Errc {
    invalid_input,
    parse,
    schema,
    empty_dataset,
    no_data,
    split,
    alignment,
    shape,
    parameter,
    divergence,
    integrity,
    version,
    not_found,
    conflict,
    safety_rejection,
    config,
    encode,
    startup,
    io,
};

std::string_view errc_name(Errc code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace aquamon
