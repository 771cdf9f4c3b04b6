#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "wsi/error.hpp"
#include "wsi/tensor_store.hpp"

namespace wsi::testing {

// Random set with encoder./head. tensors of rank 0..3 and random meta.
inline ParameterSet random_parameter_set(std::mt19937_64& rng, bool with_meta = true) {
  std::uniform_int_distribution<int> n_tensors(0, 6), rank(0, 3), dim(1, 5);
  std::normal_distribution<float> value(0.0f, 3.0f);
  ParameterSet ps;
  const int n = n_tensors(rng);
  for (int i = 0; i < n; ++i) {
    Shape shape(static_cast<std::size_t>(rank(rng)));
    for (auto& d : shape) d = static_cast<std::size_t>(dim(rng));
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = value(rng);
    const std::string prefix = (i % 2 == 0) ? "encoder." : "head.";
    ps.insert(prefix + "t" + std::to_string(i), std::move(t));
  }
  if (with_meta) {
    ps.meta()["seed"] = std::to_string(rng() % 1000);
    ps.meta()["role"] = "other";
  }
  return ps;
}

inline Tensor vec(std::initializer_list<float> values) {
  return Tensor({values.size()}, std::vector<float>(values));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("wsi-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <class F>
Errc error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected wsi::Error");
  return Errc::argument;
}

inline bool rel_close(double a, double b, double tol) {
  const double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= tol * scale;
}

}  // namespace wsi::testing
