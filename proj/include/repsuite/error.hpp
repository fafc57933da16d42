#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace repsuite {

enum class ErrorKind {
    InvalidArgument,
    Parse,
    Io,
    Config,
    EmptyDistribution,
    SupportMismatch,
    WrongScaleKind,
    DegenerateScale,
    NoComparableQuestions,
    InsufficientRows,
    DegenerateStructure,
    OracleScaleExceeded,
    UnknownQuestion,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::InvalidArgument:
        return "InvalidArgument";
    case ErrorKind::Parse:
        return "Parse";
    case ErrorKind::Io:
        return "Io";
    case ErrorKind::Config:
        return "Config";
    case ErrorKind::EmptyDistribution:
        return "EmptyDistribution";
    case ErrorKind::SupportMismatch:
        return "SupportMismatch";
    case ErrorKind::WrongScaleKind:
        return "WrongScaleKind";
    case ErrorKind::DegenerateScale:
        return "DegenerateScale";
    case ErrorKind::NoComparableQuestions:
        return "NoComparableQuestions";
    case ErrorKind::InsufficientRows:
        return "InsufficientRows";
    case ErrorKind::DegenerateStructure:
        return "DegenerateStructure";
    case ErrorKind::OracleScaleExceeded:
        return "OracleScaleExceeded";
    case ErrorKind::UnknownQuestion:
        return "UnknownQuestion";
    }
    return "Unknown";
}

/// Library-wide exception. The kind lets callers decide whether a failure is
/// fatal or just drops one cell of an evaluation.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_{kind} {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace repsuite
