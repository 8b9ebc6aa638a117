#pragma once

#include <stdexcept>
#include <string>

namespace fsw {

/// Base class for all domain errors raised by the library. The CLI maps
/// these to exit code 1; anything else escaping is a bug.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// tensor / model plumbing
struct ShapeMismatch : Error { using Error::Error; };
struct ChannelMismatch : Error { using Error::Error; };
struct ConfigMismatch : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };

// data pipeline
struct DegenerateLandmarks : Error { using Error::Error; };
struct OutOfBounds : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DuplicateId : Error { using Error::Error; };
struct MissingFile : Error { using Error::Error; };
struct InsufficientIdentities : Error { using Error::Error; };

// captioning
struct EndpointUnavailable : Error { using Error::Error; };
struct EmptyResponse : Error { using Error::Error; };
struct EmptyText : Error { using Error::Error; };

// encoders / losses
struct BackendNotLoaded : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };

// training / evaluation
struct NonFiniteLoss : Error { using Error::Error; };
struct ResumeMismatch : Error { using Error::Error; };
struct EmptyGallery : Error { using Error::Error; };
struct TooFewSamples : Error { using Error::Error; };

}  // namespace fsw
