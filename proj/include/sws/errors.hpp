#pragma once

#include <stdexcept>
#include <string>

namespace sws {

/// Base class for all toolkit errors. Subclasses mirror the failure
/// categories used across modules so callers can catch precisely.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input / configuration errors.
struct InvalidSpec : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct InvalidDimensions : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };

// Geometry / binning errors.
struct ProjectionError : Error { using Error::Error; };
struct AmbiguousRelation : Error { using Error::Error; };
struct TemplateUnsatisfiable : Error { using Error::Error; };
struct InvalidNormalizer : Error { using Error::Error; };
struct NormalizerTooSmall : Error { using Error::Error; };
struct EmptyBox : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };
struct InvalidClass : Error { using Error::Error; };

// Data / file errors.
struct NoObjects : Error { using Error::Error; };
struct NoData : Error { using Error::Error; };
struct UnsupportedVersion : Error { using Error::Error; };
struct CorruptLabels : Error { using Error::Error; };
struct DegenerateGrid : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// Training / evaluation errors.
struct NumericalError : Error { using Error::Error; };
struct EmptyLoss : Error { using Error::Error; };
struct EmptySubset : Error { using Error::Error; };
struct EmptyEval : Error { using Error::Error; };

}  // namespace sws
