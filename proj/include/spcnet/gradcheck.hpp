#pragma once

#include <functional>
#include <string>

#include "spcnet/params.hpp"

namespace spcnet {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates probed per parameter, evenly strided; 0 probes all of them.
  std::size_t max_coords_per_param = 0;
  /// When both |analytic| and |numeric| are below this, the coordinate counts
  /// as an agreeing zero. 0 keeps the plain relative rule.
  double noise_floor = 0.0;
  /// Also takes a central difference at h = eps/10 and second-order one-sided
  /// ones on stencils {0, h, 2h} and {0, -h, -2h}. If these disagree by more
  /// than kink_tol (relative), f has a kink or jump within eps of the point.
  /// Each side then shrinks its step until the stencil stops straddling it,
  /// and the analytic value is compared with the closer side, since backward()
  /// follows the branch the forward pass took.
  bool one_sided_at_kinks = false;
  double kink_tol = 1e-5;
  /// Only the part of |analytic - numeric| above the stencil's own roundoff
  /// bound (a few ulp of f over the step) counts towards the relative error.
  bool subtract_roundoff = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
  std::size_t zero_coords = 0;       // coordinates accepted under noise_floor
  std::size_t nonsmooth_coords = 0;  // coordinates compared one-sided
  double roundoff = 0.0;             // bound subtracted at the worst coordinate
};

/// Compares backward() gradients of a scalar function against central
/// differences (f(p+eps) - f(p-eps)) / (2 eps). Relative error uses the
/// denominator max(|analytic|, |numeric|, 1e-8). Throws DeterminismError if
/// two evaluations at the same point disagree.
GradCheckResult finite_diff_check(const std::function<Tensor(const ParamSet&)>& f, ParamSet& params,
                                  const GradCheckOptions& opts = {});

}  // namespace spcnet
