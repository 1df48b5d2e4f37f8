#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace archevo {

// Base for every failure raised by the library. `code()` is a stable
// machine-readable tag (e.g. "SCHEMA_VIOLATION"); what() carries detail.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

} // namespace archevo
