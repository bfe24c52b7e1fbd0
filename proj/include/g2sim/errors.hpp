#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace g2sim {

// Error categories; the C API maps each onto a status code.
enum class ErrorKind {
    InvalidArgument,
    Config,
    Format,
    Fit,
    DegenerateData,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

// Config validation failure; `path` is the dotted field path, e.g. "conversion.lambda_fwhm".
struct ConfigError : Error {
    ConfigError(std::string path, const std::string& what)
        : Error(ErrorKind::Config, path.empty() ? what : path + ": " + what), path(std::move(path)) {}
    std::string path;
};

// Malformed tag file or CSV. `offset` is the byte offset of the problem (or line number for CSV).
struct FormatError : Error {
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(ErrorKind::Format, what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
    FormatError(const std::string& what) : Error(ErrorKind::Format, what), offset(0) {}
    std::uint64_t offset;
};

struct FitError : Error {
    explicit FitError(const std::string& what) : Error(ErrorKind::Fit, what) {}
};

struct DegenerateDataError : Error {
    explicit DegenerateDataError(const std::string& what) : Error(ErrorKind::DegenerateData, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace g2sim
