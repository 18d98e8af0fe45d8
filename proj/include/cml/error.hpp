// Copyright The cml Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#ifndef CML_ERROR_HPP
#define CML_ERROR_HPP

#include <stdexcept>
#include <string>

namespace cml
{

// Base class for all library errors. Subclasses only tag the failure category so that
// callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error
{
public:
  using Error::Error;
};

// Malformed input file; the message carries the offending line number.
class ParseError : public Error
{
public:
  ParseError(const std::string &what, int line)
    : Error("line " + std::to_string(line) + ": " + what), line_(line)
  {
  }
  int line() const { return line_; }

private:
  int line_;
};

// A structural invariant of an object (mesh, matrix, archive) does not hold.
class ValidationError : public Error
{
public:
  using Error::Error;
};

// Factorization breakdown, non-convergence of an eigensolver, and similar.
// Inputs produced for a different mesh or configuration.
class MismatchError : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

class NumericalError : public Error
{
public:
  using Error::Error;
};

// Graph/sparsity structure does not support the requested operation (broken tree,
// disconnected mesh, zero pivot in a triangular solve).
class StructuralError : public Error
{
public:
  using Error::Error;
};

class ConvergenceError : public NumericalError
{
public:
  ConvergenceError(const std::string &what, double last_residual)
    : NumericalError(what), last_residual_(last_residual)
  {
  }
  double last_residual() const { return last_residual_; }

private:
  double last_residual_;
};

// Parameter outside the admissible box.
class DomainError : public Error
{
public:
  using Error::Error;
};

class TrainingError : public Error
{
public:
  TrainingError(const std::string &what, int epoch)
    : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch)
  {
  }
  int epoch() const { return epoch_; }

private:
  int epoch_;
};

}  // namespace cml

#endif  // CML_ERROR_HPP
