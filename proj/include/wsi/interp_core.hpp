#pragma once

// Weight-space arithmetic over ParameterSets: straight-line interpolation,
// difference vectors spanning an interpolation plane, direction diagnostics
// and model analogy (D = C + B - A on the encoder).

#include <map>
#include <string>
#include <vector>

#include "wsi/tensor_store.hpp"

namespace wsi {

struct DeltaTensor {
  Shape shape;
  std::vector<double> data;
};

/// theta_a - theta_ref, held in double so that theta_ref + delta reproduces
/// theta_a exactly after rounding back to f32.
struct Delta {
  std::map<std::string, DeltaTensor, std::less<>> tensors;

  static Delta zeros_like(const ParameterSet& ps);
  Delta scaled(double factor) const;
};

struct DirectionDiagnostics {
  double norm_a = 0.0;
  double norm_b = 0.0;
  double norm_ratio = 0.0;
  double angle_deg = 0.0;
};

/// alpha * theta1 + (1 - alpha) * theta0 on the selected tensors; unselected
/// tensors are copied from theta0. Meta records alpha and both endpoint hashes.
ParameterSet lerp_pair(const ParameterSet& theta0, const ParameterSet& theta1, double alpha,
                       Subset subset = Subset::all);

/// theta_a - theta_ref on the selected tensors, zero elsewhere.
Delta compute_delta(const ParameterSet& theta_a, const ParameterSet& theta_ref,
                    Subset subset = Subset::all);

/// theta_ref + alpha1 * d_src + alpha2 * d_tgt.
ParameterSet plane_point(const ParameterSet& theta_ref, const Delta& d_src, const Delta& d_tgt,
                         double alpha1, double alpha2);

/// Rescales every filter (first-axis slice; whole tensor for 1-D) of `delta`
/// to the norm of the matching filter of `reference`. Off by default in the
/// plane workflow; kept for comparison against random-direction landscapes.
Delta normalize_filterwise(const Delta& delta, const ParameterSet& reference);

/// Global L2 norms and the angle between two deltas over the selected
/// tensors. Throws degenerate-direction if either norm is zero.
DirectionDiagnostics direction_diagnostics(const Delta& d_a, const Delta& d_b,
                                           Subset subset = Subset::all);

/// Encoder tensors become C + B - A; head tensors are C's, untouched.
ParameterSet model_analogy(const ParameterSet& theta_c, const ParameterSet& theta_b,
                           const ParameterSet& theta_a);

}  // namespace wsi
