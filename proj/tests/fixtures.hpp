#ifndef MEDREP_TESTS_FIXTURES_HPP_
#define MEDREP_TESTS_FIXTURES_HPP_

#include "medrep/phantom.hpp"
#include "medrep/skeleton.hpp"
#include "medrep/surface.hpp"

namespace medrep::testing {

struct FittedPhantom {
  Phantom phantom;
  MedialSkeleton skeleton;
  PrincipalSurface surface;
};

// Default bent tube taken through skeletonisation and surface fitting.
// Built once per process.
inline const FittedPhantom& bent_tube_fit() {
  static const FittedPhantom fit = [] {
    FittedPhantom f;
    f.phantom = generate_phantom(PhantomSpec{});
    f.skeleton = skeletonize(f.phantom.mask, SkeletonOptions{});
    f.surface = iterate_fit(thin_skeleton(f.skeleton, default_thin_cell(f.phantom.mask.geom)), FitOptions{});
    return f;
  }();
  return fit;
}

}  // namespace medrep::testing

#endif  // MEDREP_TESTS_FIXTURES_HPP_
