#pragma once

#include <stdexcept>
#include <string>

namespace drift {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A version string had no leading numeric component.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A release history with no releases was queried for its latest version.
class EmptyHistory : public Error {
public:
    using Error::Error;
};

/// A dependency edge names a package that is not in the index.
class MissingPackage : public Error {
public:
    explicit MissingPackage(const std::string& package)
        : Error("package not found in index: " + package), package(package) {}
    std::string package;
};

/// A mutation's from-version no longer matches the environment pin.
class StaleMutation : public Error {
public:
    using Error::Error;
};

/// A predicate was called on a validation result of the wrong status.
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// An environment references a (package, version) the world does not define.
class WorldInconsistency : public Error {
public:
    using Error::Error;
};

/// The validator backend itself failed (infrastructure, not the snippet).
class BackendFailure : public Error {
public:
    using Error::Error;
};

/// Input file missing, unreadable, or malformed.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace drift
