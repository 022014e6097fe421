#pragma once

#include <stdexcept>
#include <string>

namespace droem {

/// Base of every error raised by the library. Each subclass names one
/// precondition or runtime failure so callers can catch narrowly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DROEM_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

DROEM_DEFINE_ERROR(PoleError);
DROEM_DEFINE_ERROR(DomainError);
DROEM_DEFINE_ERROR(ShapeError);
DROEM_DEFINE_ERROR(NoSolutionError);
DROEM_DEFINE_ERROR(NotClosedError);
DROEM_DEFINE_ERROR(MissingStructureError);
DROEM_DEFINE_ERROR(SingularSampleError);
DROEM_DEFINE_ERROR(NoUnitError);
DROEM_DEFINE_ERROR(EvalDomainError);
DROEM_DEFINE_ERROR(DegenerateDifferenceError);
DROEM_DEFINE_ERROR(UnitarizabilityError);
DROEM_DEFINE_ERROR(InsufficientDataError);
DROEM_DEFINE_ERROR(OverflowError);
DROEM_DEFINE_ERROR(StabilityError);
DROEM_DEFINE_ERROR(RatioError);
DROEM_DEFINE_ERROR(PaletteSizeError);
DROEM_DEFINE_ERROR(ParseError);
DROEM_DEFINE_ERROR(ObserverCountError);
DROEM_DEFINE_ERROR(BindError);

#undef DROEM_DEFINE_ERROR

}  // namespace droem
