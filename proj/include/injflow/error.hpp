#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace injflow {

enum class ErrorKind {
    InvalidArgument,
    InvalidLayer,
    InvalidCandidate,
    InvalidConfig,
    UnsupportedLayer,
    BudgetExceeded,
    NumericError,
    InternalError,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library. `stage()` is set when the failure
// happened inside a network stage (T_0 = 0, R_1 = 1, T_1 = 2, ...).
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::optional<int> stage = std::nullopt);

    ErrorKind kind() const noexcept { return kind_; }
    std::optional<int> stage() const noexcept { return stage_; }
    const std::string& message() const noexcept { return message_; }

    Error with_stage(int stage) const { return Error(kind_, message_, stage); }

private:
    ErrorKind kind_;
    std::string message_;
    std::optional<int> stage_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message)
{
    if (!condition) {
        fail(kind, message);
    }
}

} // namespace injflow
