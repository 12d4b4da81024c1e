#ifndef ENVCALVI_ERRORS_HPP
#define ENVCALVI_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace envcalvi {

// Invalid user-facing input (bad dimensions, malformed files, out-of-range
// flags). CLI maps this to exit code 2.
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failure inside an algorithm (non-PD matrix where PD is required,
// optimizer breakdown, violated curvature assumption). CLI maps this to exit
// code 3 and serializes the message.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace envcalvi

#endif
