#include "shipvl/error.hpp"

namespace shipvl {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DegenerateQuad: return "DegenerateQuad";
        case ErrorCode::SelfIntersecting: return "SelfIntersecting";
        case ErrorCode::SpaceMismatch: return "SpaceMismatch";
        case ErrorCode::OutOfBounds: return "OutOfBounds";
        case ErrorCode::NonCanonicalBox: return "NonCanonicalBox";
        case ErrorCode::MalformedLine: return "MalformedLine";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::UnknownFormat: return "UnknownFormat";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::FileFormatError: return "FileFormatError";
        case ErrorCode::ImageDecodeError: return "ImageDecodeError";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::DivergenceDetected: return "DivergenceDetected";
        case ErrorCode::GeometryMismatch: return "GeometryMismatch";
        case ErrorCode::NoGroundTruth: return "NoGroundTruth";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::SegmenterFailure: return "SegmenterFailure";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace shipvl
