#pragma once

#include <stdexcept>

namespace bproj {

/// Base class of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A direction or difference vector had zero norm where a direction is required.
struct ZeroVectorError : Error {
  using Error::Error;
};

/// Vector lengths or model dimensions disagree.
struct DimensionError : Error {
  using Error::Error;
};

/// Numeric argument outside the documented domain (negative radius, bad beta
/// arguments, quantization grid with fewer than two levels, ...).
struct DomainError : Error {
  using Error::Error;
};

/// Base for IDX file parsing problems.
struct IdxError : Error {
  using Error::Error;
};

/// IDX magic number is not the expected image/label magic.
struct BadMagicError : IdxError {
  using IdxError::IdxError;
};

/// IDX file ends before the promised payload.
struct TruncatedFileError : IdxError {
  using IdxError::IdxError;
};

/// Image and label files advertise different record counts.
struct CountMismatchError : IdxError {
  using IdxError::IdxError;
};

/// Class label outside [0, num_classes).
struct InvalidTargetError : Error {
  using Error::Error;
};

struct EmptyDatasetError : Error {
  using Error::Error;
};

/// No image of the evaluation set is classified correctly, so the benchmark
/// denominator would be zero.
struct EmptyEvaluationSetError : Error {
  using Error::Error;
};

/// Multi-epsilon aggregation got reports over different image sets.
struct MismatchedImageSetsError : Error {
  using Error::Error;
};

/// An attack spent more gradient calls than the protocol allows.
struct BudgetExceededError : Error {
  using Error::Error;
};

struct UnknownAttackError : Error {
  using Error::Error;
};

/// File could not be opened, read or written.
struct IoError : Error {
  using Error::Error;
};

/// Malformed model file or configuration payload.
struct FormatError : Error {
  using Error::Error;
};

}  // namespace bproj
