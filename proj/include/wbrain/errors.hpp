#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wbrain {

enum class ErrorKind {
    io,
    format,
    degenerate_mesh,
    dimension,
    convergence,
    domain,
    degenerate_data,
    missing_surface,
    mismatch,
    rank,
    aborted,
};

const char* to_string(ErrorKind kind);

// Base of every error raised by the library. The kind drives the CLI exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Data errors exit with 2, numerical failures with 3.
    bool is_numerical() const noexcept {
        return kind_ == ErrorKind::convergence || kind_ == ErrorKind::rank ||
               kind_ == ErrorKind::degenerate_data;
    }

private:
    ErrorKind kind_;
};

#define WBRAIN_DEFINE_ERROR(Name, Kind)                                   \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(Kind, what) {}     \
    };

WBRAIN_DEFINE_ERROR(IoError, ErrorKind::io)
WBRAIN_DEFINE_ERROR(FormatError, ErrorKind::format)
WBRAIN_DEFINE_ERROR(DegenerateMeshError, ErrorKind::degenerate_mesh)
WBRAIN_DEFINE_ERROR(DimensionError, ErrorKind::dimension)
WBRAIN_DEFINE_ERROR(DomainError, ErrorKind::domain)
WBRAIN_DEFINE_ERROR(DegenerateDataError, ErrorKind::degenerate_data)
WBRAIN_DEFINE_ERROR(MissingSurfaceError, ErrorKind::missing_surface)
WBRAIN_DEFINE_ERROR(MismatchError, ErrorKind::mismatch)
WBRAIN_DEFINE_ERROR(RankError, ErrorKind::rank)
// Batch run stopped because too many inputs failed.
WBRAIN_DEFINE_ERROR(AbortedError, ErrorKind::aborted)

#undef WBRAIN_DEFINE_ERROR

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::size_t iterations, double residual)
        : Error(ErrorKind::convergence,
                what + " (iterations=" + std::to_string(iterations) +
                    ", residual=" + std::to_string(residual) + ")"),
          iterations_(iterations),
          residual_(residual) {}

    std::size_t iterations() const noexcept { return iterations_; }
    double residual() const noexcept { return residual_; }

private:
    std::size_t iterations_;
    double residual_;
};

}  // namespace wbrain
