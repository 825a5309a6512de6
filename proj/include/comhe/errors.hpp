#ifndef COMHE_ERRORS_HPP
#define COMHE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace comhe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define COMHE_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  };

COMHE_DEFINE_ERROR(ShapeMismatch)
COMHE_DEFINE_ERROR(NonFiniteValue)
COMHE_DEFINE_ERROR(DegenerateRow)
COMHE_DEFINE_ERROR(NonScalarRoot)
COMHE_DEFINE_ERROR(NotTwiceDifferentiable)
COMHE_DEFINE_ERROR(DegenerateDistance)
COMHE_DEFINE_ERROR(UnsupportedKernel)
COMHE_DEFINE_ERROR(DegenerateProjection)
COMHE_DEFINE_ERROR(SingularCore)
COMHE_DEFINE_ERROR(DivergedEnergy)
COMHE_DEFINE_ERROR(RequiresAcuteAngle)
COMHE_DEFINE_ERROR(GramSchmidtDegenerate)
COMHE_DEFINE_ERROR(DivergedLoss)
COMHE_DEFINE_ERROR(InvalidArgument)

#undef COMHE_DEFINE_ERROR

}  // namespace comhe

#endif  // COMHE_ERRORS_HPP
