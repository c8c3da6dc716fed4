#pragma once

#include <stdexcept>
#include <string>

namespace fraclab {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (x <= 0, p < 1, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Derivative order above what a Bernstein function supports.
class OrderError : public Error {
public:
  using Error::Error;
};

/// Malformed interval or index range.
class RangeError : public Error {
public:
  using Error::Error;
};

/// A parameter relation required by an estimate or theorem does not hold.
class ConstraintError : public Error {
public:
  using Error::Error;
};

/// Series or iteration failed to converge within its budget.
class ConvergenceError : public Error {
public:
  using Error::Error;
};

/// Integral representation is too close to a pole of its denominator.
class SingularQuadratureError : public Error {
public:
  using Error::Error;
};

/// Adaptive quadrature could not reach the requested accuracy.
class QuadratureError : public Error {
public:
  using Error::Error;
};

/// Array or grid shape mismatch.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A Fourier symbol produced inf or nan at some grid frequency.
class SymbolError : public Error {
public:
  using Error::Error;
};

} // namespace fraclab
