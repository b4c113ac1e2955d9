#pragma once

#include <stdexcept>
#include <string>

namespace pstory {

// Base of every error raised by the library. The CLI maps subclasses to exit
// codes, so new failure modes should derive from one of the kinds below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class NumericError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class EmptyInputError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class DataError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class DeterminismError : public Error { public: using Error::Error; };
class VariantMismatchError : public FormatError { public: using FormatError::FormatError; };

}  // namespace pstory
