#pragma once

#include <stdexcept>
#include <string>

namespace kea {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible; message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A class index or binary target is outside the label space.
class LabelError : public Error {
 public:
  using Error::Error;
};

// A token/vocabulary id is out of range.
class IdError : public Error {
 public:
  using Error::Error;
};

// Invalid run or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Text file could not be parsed; message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Binary file violates its documented layout; message carries the byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss; message names epoch and batch.
class DivergedError : public Error {
 public:
  using Error::Error;
};

}  // namespace kea
