#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shipvl {

enum class ErrorCode {
    InvalidArgument,
    DegenerateQuad,
    SelfIntersecting,
    SpaceMismatch,
    OutOfBounds,
    NonCanonicalBox,
    MalformedLine,
    IoError,
    UnknownFormat,
    FormatError,
    FileFormatError,
    ImageDecodeError,
    ShapeMismatch,
    EmptyBatch,
    DivergenceDetected,
    GeometryMismatch,
    NoGroundTruth,
    DimensionMismatch,
    SegmenterFailure,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every library failure is reported as an Error carrying a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace shipvl
