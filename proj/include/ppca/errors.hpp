#ifndef PPCA_ERRORS_HPP
#define PPCA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ppca {

// Base for every error raised by the library. The CLI maps FormatError and
// InvalidInput to exit code 2 and all numeric failures to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class NotPositiveSemidefinite : public NumericError {
 public:
  using NumericError::NumericError;
};

class RankDeficient : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateIntegration : public NumericError {
 public:
  using NumericError::NumericError;
};

class IndexMatchFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

class TieError : public NumericError {
 public:
  using NumericError::NumericError;
};

class StudyIncomplete : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace ppca

#endif  // PPCA_ERRORS_HPP
