#ifndef SCFM_ERRORS_HPP
#define SCFM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace scfm {

/// Bad caller input: flags, parameter values, shapes. CLI exit code 2.
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or out-of-contract data files and matrices. CLI exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical failure or a broken sampler invariant. CLI exit code 4.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace scfm

#endif
