#include "wsi/interp_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "wsi/error.hpp"

namespace wsi {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw Error(Errc::argument, std::string(what) + " must be finite");
}

std::string format_exact(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void check_delta_shapes(const ParameterSet& ref, const Delta& d) {
  std::vector<std::string> missing;
  for (const auto& [name, _] : ref.tensors())
    if (!d.tensors.contains(name)) missing.push_back(name);
  for (const auto& [name, _] : d.tensors)
    if (!ref.contains(name)) missing.push_back(name);
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    std::string list;
    for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
    throw Error(Errc::missing_name, "delta and parameters differ in: " + list);
  }
  for (const auto& [name, t] : ref.tensors()) {
    const auto& dt = d.tensors.find(name)->second;
    if (dt.shape != t.shape)
      throw Error(Errc::shape_mismatch, "delta '" + name + "' has shape " +
                                            shape_to_string(dt.shape) + " vs " +
                                            shape_to_string(t.shape));
  }
}

}  // namespace

Delta Delta::zeros_like(const ParameterSet& ps) {
  Delta d;
  for (const auto& [name, t] : ps.tensors())
    d.tensors.emplace(name, DeltaTensor{t.shape, std::vector<double>(t.size(), 0.0)});
  return d;
}

Delta Delta::scaled(double factor) const {
  Delta out = *this;
  for (auto& [_, t] : out.tensors)
    for (double& v : t.data) v *= factor;
  return out;
}

ParameterSet lerp_pair(const ParameterSet& theta0, const ParameterSet& theta1, double alpha,
                       Subset subset) {
  require_finite(alpha, "alpha");
  validate_compatibility(theta0, theta1);
  ParameterSet out;
  const double beta = 1.0 - alpha;
  for (const auto& [name, t0] : theta0.tensors()) {
    if (!selects(subset, name)) {
      out.insert(name, t0);
      continue;
    }
    const Tensor& t1 = theta1.at(name);
    Tensor mixed = Tensor::zeros(t0.shape);
    for (std::size_t i = 0; i < t0.size(); ++i)
      mixed.data[i] = static_cast<float>(alpha * double(t1.data[i]) + beta * double(t0.data[i]));
    out.insert(name, std::move(mixed));
  }
  out.meta() = theta0.meta();
  out.meta()["alpha"] = format_exact(alpha);
  out.meta()["endpoint0"] = content_hash(theta0);
  out.meta()["endpoint1"] = content_hash(theta1);
  out.meta()["subset"] = std::string(to_string(subset));
  return out;
}

Delta compute_delta(const ParameterSet& theta_a, const ParameterSet& theta_ref, Subset subset) {
  validate_compatibility(theta_a, theta_ref);
  Delta d = Delta::zeros_like(theta_ref);
  for (auto& [name, dt] : d.tensors) {
    if (!selects(subset, name)) continue;
    const Tensor& a = theta_a.at(name);
    const Tensor& r = theta_ref.at(name);
    for (std::size_t i = 0; i < dt.data.size(); ++i)
      dt.data[i] = double(a.data[i]) - double(r.data[i]);
  }
  return d;
}

ParameterSet plane_point(const ParameterSet& theta_ref, const Delta& d_src, const Delta& d_tgt,
                         double alpha1, double alpha2) {
  require_finite(alpha1, "alpha1");
  require_finite(alpha2, "alpha2");
  check_delta_shapes(theta_ref, d_src);
  check_delta_shapes(theta_ref, d_tgt);
  ParameterSet out;
  for (const auto& [name, r] : theta_ref.tensors()) {
    const auto& ds = d_src.tensors.find(name)->second.data;
    const auto& dg = d_tgt.tensors.find(name)->second.data;
    Tensor t = Tensor::zeros(r.shape);
    for (std::size_t i = 0; i < r.size(); ++i)
      t.data[i] = static_cast<float>(double(r.data[i]) + alpha1 * ds[i] + alpha2 * dg[i]);
    out.insert(name, std::move(t));
  }
  out.meta() = theta_ref.meta();
  out.meta()["alpha1"] = format_exact(alpha1);
  out.meta()["alpha2"] = format_exact(alpha2);
  return out;
}

Delta normalize_filterwise(const Delta& delta, const ParameterSet& reference) {
  check_delta_shapes(reference, delta);
  Delta out = delta;
  for (auto& [name, dt] : out.tensors) {
    const Tensor& w = reference.at(name);
    const std::size_t rows = dt.shape.size() > 1 ? dt.shape.front() : 1;
    const std::size_t cols = dt.data.size() / rows;
    for (std::size_t r = 0; r < rows; ++r) {
      double dn = 0.0, wn = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        dn += dt.data[r * cols + c] * dt.data[r * cols + c];
        wn += double(w.data[r * cols + c]) * double(w.data[r * cols + c]);
      }
      if (dn == 0.0) continue;
      const double scale = std::sqrt(wn) / std::sqrt(dn);
      for (std::size_t c = 0; c < cols; ++c) dt.data[r * cols + c] *= scale;
    }
  }
  return out;
}

DirectionDiagnostics direction_diagnostics(const Delta& d_a, const Delta& d_b, Subset subset) {
  double aa = 0.0, bb = 0.0, ab = 0.0;
  bool any = false;
  for (const auto& [name, ta] : d_a.tensors) {
    if (!selects(subset, name)) continue;
    auto it = d_b.tensors.find(name);
    if (it == d_b.tensors.end())
      throw Error(Errc::missing_name, "second delta lacks '" + name + "'");
    if (it->second.shape != ta.shape)
      throw Error(Errc::shape_mismatch, "delta '" + name + "' has shape " +
                                            shape_to_string(ta.shape) + " vs " +
                                            shape_to_string(it->second.shape));
    any = true;
    const auto& b = it->second.data;
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
      aa += ta.data[i] * ta.data[i];
      bb += b[i] * b[i];
      ab += ta.data[i] * b[i];
    }
  }
  if (!any)
    throw Error(Errc::degenerate_direction,
                "no tensors selected by subset '" + std::string(to_string(subset)) + "'");
  DirectionDiagnostics out;
  out.norm_a = std::sqrt(aa);
  out.norm_b = std::sqrt(bb);
  if (out.norm_a == 0.0 || out.norm_b == 0.0)
    throw Error(Errc::degenerate_direction, "zero-norm delta, angle undefined");
  out.norm_ratio = out.norm_a / out.norm_b;
  // atan2 form: exact 0 for identical directions, stable near 0 and 180.
  const double cross = std::sqrt(std::max(0.0, aa * bb - ab * ab));
  out.angle_deg = std::atan2(cross, ab) * 180.0 / std::numbers::pi;
  return out;
}

ParameterSet model_analogy(const ParameterSet& theta_c, const ParameterSet& theta_b,
                           const ParameterSet& theta_a) {
  validate_compatibility(theta_c, theta_b);
  validate_compatibility(theta_c, theta_a);
  ParameterSet out;
  for (const auto& [name, c] : theta_c.tensors()) {
    if (!selects(Subset::encoder, name)) {
      out.insert(name, c);
      continue;
    }
    const Tensor& b = theta_b.at(name);
    const Tensor& a = theta_a.at(name);
    Tensor t = Tensor::zeros(c.shape);
    for (std::size_t i = 0; i < c.size(); ++i)
      t.data[i] = static_cast<float>((double(c.data[i]) + double(b.data[i])) - double(a.data[i]));
    out.insert(name, std::move(t));
  }
  out.meta() = theta_c.meta();
  out.meta()["analogy"] = "C+B-A";
  return out;
}

}  // namespace wsi
