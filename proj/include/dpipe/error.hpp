#pragma once

#include <stdexcept>
#include <string>

namespace dpipe {

// Thrown when a computation produces non-finite values (NaN/Inf). Mapped to a
// distinct process exit code by the CLI.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace dpipe
