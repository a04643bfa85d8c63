#pragma once

#include <stdexcept>
#include <string>

namespace treenas {

// Base of every error raised by the engine. Subclasses name the failure kind
// so callers can react (e.g. fall back to encodings on OutputsUnavailable).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TREENAS_DEFINE_ERROR(Name)        \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

TREENAS_DEFINE_ERROR(CapacityExceeded);
TREENAS_DEFINE_ERROR(InvalidArch);
TREENAS_DEFINE_ERROR(NoCostModel);
TREENAS_DEFINE_ERROR(SchemaError);
TREENAS_DEFINE_ERROR(CoverageError);
TREENAS_DEFINE_ERROR(OutputsUnavailable);
TREENAS_DEFINE_ERROR(ShapeMismatch);
TREENAS_DEFINE_ERROR(NonFinite);
TREENAS_DEFINE_ERROR(DegenerateMatrix);
TREENAS_DEFINE_ERROR(ConstraintUnsupported);
TREENAS_DEFINE_ERROR(BudgetExhausted);
TREENAS_DEFINE_ERROR(ForeignArchitecture);
TREENAS_DEFINE_ERROR(InvalidConfig);

#undef TREENAS_DEFINE_ERROR

}  // namespace treenas
