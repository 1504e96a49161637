#include "wbrain/errors.hpp"

namespace wbrain {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::io: return "io-error";
        case ErrorKind::format: return "format-error";
        case ErrorKind::degenerate_mesh: return "degenerate-mesh-error";
        case ErrorKind::dimension: return "dimension-error";
        case ErrorKind::convergence: return "convergence-error";
        case ErrorKind::domain: return "domain-error";
        case ErrorKind::degenerate_data: return "degenerate-data-error";
        case ErrorKind::missing_surface: return "missing-surface-error";
        case ErrorKind::mismatch: return "mismatch-error";
        case ErrorKind::rank: return "rank-error";
        case ErrorKind::aborted: return "pipeline-aborted";
    }
    return "error";
}

}  // namespace wbrain
