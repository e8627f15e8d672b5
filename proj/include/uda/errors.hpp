#ifndef UDA_ERRORS_HPP
#define UDA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace uda {

// Thrown for malformed or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a computation produces non-finite values (CLI exit code 3).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace uda

#endif
