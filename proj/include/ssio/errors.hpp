#pragma once

#include <stdexcept>
#include <string>

namespace ssio {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// The information matrix could not be factorized (singular or indefinite).
/// Search code treats this as cost = +infinity.
class SingularInformation : public Error {
public:
    explicit SingularInformation(const std::string& what = "information matrix is singular")
        : Error(what) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

/// No feasible design exists (bad r, all-singular search, violated budget).
class Infeasible : public Error {
public:
    explicit Infeasible(const std::string& what) : Error(what) {}
};

/// A nonfinite value appeared where a finite one is required.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what) {}
};

/// Instance exceeds a hard size guard (brute-force oracles only).
class GuardError : public Error {
public:
    explicit GuardError(const std::string& what) : Error(what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace ssio
