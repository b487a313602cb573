#pragma once

#include <stdexcept>
#include <string>

namespace rgbdpose {

/// Base of every error raised by the library. `code()` is a stable short
/// identifier that the CLI maps onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define RGBDPOSE_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what = {}) : Error(#Name, what) {} \
  }

// geometry
RGBDPOSE_DEFINE_ERROR(DegenerateProjection);
RGBDPOSE_DEFINE_ERROR(InvalidDepth);
RGBDPOSE_DEFINE_ERROR(NoDepthAvailable);
// voxel
RGBDPOSE_DEFINE_ERROR(ReferenceUnavailable);
RGBDPOSE_DEFINE_ERROR(OutOfGrid);
// nn
RGBDPOSE_DEFINE_ERROR(ShapeError);
RGBDPOSE_DEFINE_ERROR(NumericalError);
RGBDPOSE_DEFINE_ERROR(DataError);
RGBDPOSE_DEFINE_ERROR(InvalidArgument);
RGBDPOSE_DEFINE_ERROR(FormatError);
// baselines
RGBDPOSE_DEFINE_ERROR(InsufficientCorrespondences);
RGBDPOSE_DEFINE_ERROR(DegenerateInput);
// triangulate
RGBDPOSE_DEFINE_ERROR(InsufficientViews);
RGBDPOSE_DEFINE_ERROR(DegenerateGeometry);
RGBDPOSE_DEFINE_ERROR(DegenerateHand);
// eval
RGBDPOSE_DEFINE_ERROR(NoComparableJoints);

#undef RGBDPOSE_DEFINE_ERROR

}  // namespace rgbdpose
