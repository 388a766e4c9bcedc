#include "spcnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spcnet/errors.hpp"

namespace spcnet {

GradCheckResult finite_diff_check(const std::function<Tensor(const ParamSet&)>& f, ParamSet& params,
                                  const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw ArgumentError("finite_diff_check: eps must be positive");

  params.zero_grad();
  const Tensor loss = f(params);
  const double base = loss.item();
  backward(loss);
  const double again = f(params).item();
  if (again != base) {
    throw DeterminismError("finite_diff_check: repeated evaluation differs (" + std::to_string(base) + " vs " +
                           std::to_string(again) + ")");
  }

  // Spacing of doubles near f; a difference quotient over step s is good to a few of these over s.
  const double ulp_f = std::numeric_limits<double>::epsilon() * std::max(std::abs(base), 1.0);
  GradCheckResult result;
  for (auto& [name, tensor] : params) {
    const std::vector<double> analytic = tensor.grad();
    auto values = tensor.mutable_values();
    const std::size_t n = values.size();
    const std::size_t stride =
        opts.max_coords_per_param == 0 || n <= opts.max_coords_per_param ? 1 : (n + opts.max_coords_per_param - 1) / opts.max_coords_per_param;
    auto at = [&](std::size_t i, double offset) {
      const double saved = values[i];
      values[i] = saved + offset;
      const double v = f(params).item();
      values[i] = saved;
      return v;
    };
    for (std::size_t i = 0; i < n; i += stride) {
      double numeric = (at(i, opts.eps) - at(i, -opts.eps)) / (2.0 * opts.eps);
      double roundoff = 2.0 * ulp_f / opts.eps;
      ++result.coords_checked;
      if (opts.one_sided_at_kinks) {
        auto differ = [&](double a, double b) {
          return std::abs(a - b) > opts.kink_tol * std::max({std::abs(a), std::abs(b), opts.noise_floor});
        };
        const double h = opts.eps / 10.0;
        const double fine = (at(i, h) - at(i, -h)) / (2.0 * h);
        // Second-order one-sided stencil on {0, s, 2s}.
        auto one_sided = [&](double s) { return (-3.0 * base + 4.0 * at(i, s) - at(i, 2.0 * s)) / (2.0 * s); };
        // Shrinks the step until two successive scales agree up to roundoff, i.e. the stencil no longer
        // straddles a kink. The coarser of the agreeing pair carries less roundoff.
        struct Side {
          double value, roundoff;
        };
        auto side = [&](double sign) {
          double s = opts.eps;
          double prev = one_sided(sign * s);
          for (int k = 0; k < 4; ++k, s /= 10.0) {
            const double est = one_sided(sign * s / 10.0);
            if (std::abs(est - prev) <= opts.kink_tol * std::max(std::abs(est), std::abs(prev)) + 80.0 * ulp_f / s)
              return Side{prev, 8.0 * ulp_f / s};
            prev = est;
          }
          return Side{prev, 8.0 * ulp_f / s};
        };
        if (differ(numeric, fine) || differ(one_sided(h), one_sided(-h))) {
          ++result.nonsmooth_coords;
          const Side up = side(1.0), dn = side(-1.0);
          const Side& pick = std::abs(up.value - analytic[i]) <= std::abs(dn.value - analytic[i]) ? up : dn;
          numeric = pick.value;
          roundoff = pick.roundoff;
        }
      }
      if (std::abs(analytic[i]) < opts.noise_floor && std::abs(numeric) < opts.noise_floor) {
        ++result.zero_coords;
        continue;
      }
      if (!opts.subtract_roundoff) roundoff = 0.0;
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::max(0.0, std::abs(analytic[i] - numeric) - roundoff) / denom;
      if (result.worst_param.empty() || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
        result.roundoff = roundoff;
      }
    }
  }
  return result;
}

}  // namespace spcnet
