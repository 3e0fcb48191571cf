#pragma once

#include <stdexcept>
#include <string>

namespace sepkit {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SignalTooShort : Error {
  using Error::Error;
};
struct UnsupportedSize : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DegenerateWindow : Error {
  using Error::Error;
};
struct MissingPhase : Error {
  using Error::Error;
};
struct DegenerateReference : Error {
  using Error::Error;
};
struct DegenerateSource : Error {
  using Error::Error;
};
struct NumericalFailure : Error {
  using Error::Error;
};
struct InsufficientData : Error {
  using Error::Error;
};
struct TooManySources : Error {
  using Error::Error;
};
struct MalformedFile : Error {
  using Error::Error;
};
struct Diverged : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace sepkit
