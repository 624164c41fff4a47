#include "injflow/error.hpp"

namespace injflow {

std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidLayer: return "invalid-layer";
    case ErrorKind::InvalidCandidate: return "invalid-candidate";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::UnsupportedLayer: return "unsupported-layer";
    case ErrorKind::BudgetExceeded: return "budget-exceeded";
    case ErrorKind::NumericError: return "numeric-error";
    case ErrorKind::InternalError: return "internal-error";
    }
    return "unknown";
}

namespace {

std::string decorate(ErrorKind kind, const std::string& message, std::optional<int> stage)
{
    std::string out(to_string(kind));
    if (stage) {
        out += " (stage " + std::to_string(*stage) + ")";
    }
    out += ": " + message;
    return out;
}

} // namespace

Error::Error(ErrorKind kind, const std::string& message, std::optional<int> stage)
    : std::runtime_error(decorate(kind, message, stage)), kind_(kind), message_(message), stage_(stage)
{
}

void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

} // namespace injflow
