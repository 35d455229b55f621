#pragma once

#include <stdexcept>
#include <string>

namespace eos {

/// Base class for all typed errors thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An analytic quantity is undefined at the given state (e.g. beta at
/// z' + z''*Theta = 0, or a DLN coordinate equal to zero).
struct DegenerateState : Error {
  using Error::Error;
};

/// The closed-form gamma_beta denominator vanished (gamma_Theta -> 0).
struct AsymptoteHit : Error {
  using Error::Error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct Unsupported : Error {
  using Error::Error;
};

struct EigensolveFailed : Error {
  using Error::Error;
};

/// Lanczos hit repeated orthogonalization breakdowns even after restarts.
struct BreakdownLoop : Error {
  using Error::Error;
};

/// The probabilistic u'(Hv) == v'(Hu) pre-check failed.
struct OperatorNotSymmetric : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct ZeroGradient : Error {
  using Error::Error;
};

struct NonFinite : Error {
  using Error::Error;
};

struct TooShort : Error {
  using Error::Error;
};

struct MissingCheckpoints : Error {
  using Error::Error;
};

struct BadMagic : Error {
  using Error::Error;
};

struct TruncatedFile : Error {
  using Error::Error;
};

struct CountMismatch : Error {
  using Error::Error;
};

struct InsufficientData : Error {
  using Error::Error;
};

struct ConfigInvalid : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace eos
