#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lsm {

// Base of every error raised by the library. Callers that only care about
// "something went wrong in lsm" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
public:
  NotPositiveDefinite(std::size_t pivot, double value)
      : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
              " = " + std::to_string(value)),
        pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

private:
  std::size_t pivot_;
};

class SingularBlock : public Error {
public:
  using Error::Error;
};

class RankDeficientBasis : public Error {
public:
  using Error::Error;
};

class IndefiniteSystem : public Error {
public:
  using Error::Error;
};

class InvalidWeights : public Error {
public:
  using Error::Error;
};

class InconsistentInstance : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

class IoError : public Error {
public:
  IoError(const std::string& what, std::string path)
      : Error(what + ": " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

}  // namespace lsm
