#pragma once

#include <stdexcept>
#include <string>

namespace fundus {

// Base for every failure raised by the pipeline. Callers that only care about
// "this stage rejected its input" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown by SWAT when a window's histogram carries no variance.
class DegenerateWindow : public Error {
public:
    using Error::Error;
};

}  // namespace fundus
