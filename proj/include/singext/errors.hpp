#pragma once

#include <stdexcept>
#include <string>

namespace singext {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidPoint : public Error {
 public:
  using Error::Error;
};

class UndefinedRetraction : public Error {
 public:
  using Error::Error;
};

class InterpolationDegeneracy : public Error {
 public:
  using Error::Error;
};

class AmbiguousLift : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

// Height query outside the band covered by the active scale range.
class OutOfBand : public Error {
 public:
  OutOfBand(const std::string& what, long nearest_k) : Error(what), nearest_k_(nearest_k) {}
  long nearest_k() const { return nearest_k_; }

 private:
  long nearest_k_;
};

class SelectionFailure : public Error {
 public:
  using Error::Error;
};

class TubeViolation : public Error {
 public:
  using Error::Error;
};

class SingularPoint : public Error {
 public:
  using Error::Error;
};

class ResolutionError : public Error {
 public:
  using Error::Error;
};

class PoleError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace singext
