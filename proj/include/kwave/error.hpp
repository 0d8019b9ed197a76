#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>

namespace kwave {

using Point = std::map<std::string, double>;

std::string format_point(const Point& p);

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Error that carries the sample point where a defect was observed.
class WitnessedError : public Error {
public:
  WitnessedError(const std::string& what, Point witness)
      : Error(what + " at " + format_point(witness)), witness_(std::move(witness)) {}
  const Point& witness() const noexcept { return witness_; }

private:
  Point witness_;
};

class SyntaxError : public Error {
public:
  SyntaxError(const std::string& msg, std::size_t offset)
      : Error("syntax error at offset " + std::to_string(offset) + ": " + msg), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

class UnknownIdentifier : public Error {
public:
  explicit UnknownIdentifier(std::string name)
      : Error("unknown identifier '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

private:
  std::string name_;
};

class EvalError : public Error {
public:
  using Error::Error;
};

class DomainExhausted : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class SingularBlock : public Error {
public:
  SingularBlock(const std::string& what, double condition)
      : Error(what + " (condition number " + std::to_string(condition) + ")"), condition_(condition) {}
  double condition() const noexcept { return condition_; }

private:
  double condition_;
};

class EmptyKernel : public Error {
public:
  using Error::Error;
};

class DegenerateFrame : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class DependentElements : public WitnessedError {
public:
  DependentElements(const std::string& wedge, Point witness)
      : WitnessedError("dependent elements: " + wedge, std::move(witness)), wedge_(wedge) {}
  const std::string& wedge() const noexcept { return wedge_; }

private:
  std::string wedge_;
};

class NotClosed : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class PathDependent : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class NotInSpan : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class IncompatibleSystem : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class StraighteningFailed : public Error {
public:
  using Error::Error;
};

class BlowUp : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class StiffnessAbort : public Error {
public:
  using Error::Error;
};

class NonIntegrable : public WitnessedError {
public:
  NonIntegrable(double mismatch, Point witness)
      : WitnessedError("flow-order mismatch " + std::to_string(mismatch), std::move(witness)),
        mismatch_(mismatch) {}
  double mismatch() const noexcept { return mismatch_; }

private:
  double mismatch_;
};

class NeighborDiverged : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class DegenerateElements : public WitnessedError {
public:
  using WitnessedError::WitnessedError;
};

class SolveFailed : public Error {
public:
  using Error::Error;
};

}  // namespace kwave
