#pragma once

#include <stdexcept>
#include <string>

namespace saft {

/// Base for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI's JSON error output.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

/// Zero-norm vectors and other inputs a cosine cannot be taken of.
struct DegenerateInputError : Error {
    explicit DegenerateInputError(const std::string& what) : Error("degenerate_input", what) {}
};

struct ShapeMismatchError : Error {
    explicit ShapeMismatchError(const std::string& what) : Error("shape_mismatch", what) {}
};

struct NonFiniteError : Error {
    explicit NonFiniteError(const std::string& what) : Error("non_finite", what) {}
};

/// Corrupt, truncated, or wrong-version artifact files.
struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error("format", what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

/// An upstream artifact a command needs is missing or was produced by a
/// different configuration.
struct DependencyError : Error {
    explicit DependencyError(const std::string& what) : Error("dependency", what) {}
};

struct EndpointError : Error {
    EndpointError(const std::string& what, int attempts)
        : Error("endpoint", what + " (after " + std::to_string(attempts) + " attempts)"),
          attempts_(attempts) {}

    int attempts() const noexcept { return attempts_; }

private:
    int attempts_;
};

}  // namespace saft
