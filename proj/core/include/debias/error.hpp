#pragma once

#include <stdexcept>
#include <string>

namespace debias {

/// Raised for any violated precondition or malformed input. The CLI maps
/// these to exit status 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace debias
