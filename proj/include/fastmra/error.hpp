#pragma once

#include <stdexcept>
#include <string>

namespace fastmra {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Container or text file could not be parsed.
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class TruncatedData : public Error {
 public:
  using Error::Error;
};

// Frame too small for the requested motion-estimation scale.
class ScaleTooCoarse : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class ChecksumMismatch : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data is inconsistent with what an operation needs (e.g. a label
// set with an empty class).
class DataError : public Error {
 public:
  using Error::Error;
};

class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace fastmra
