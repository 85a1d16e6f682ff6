#pragma once

// Shared test-side oracles. Everything here is deliberately independent of
// the library implementation paths it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "manip/tensorcore.hpp"

namespace testsupport {

// Central finite differences (4th-order stencil) of f over every coordinate
// of the given parameters. f must re-run the full forward pass on each call.
inline std::vector<double> finite_diff(
    const std::function<double()>& f,
    std::vector<manip::tensorcore::Parameter*> params, double h = 1e-5) {
  std::vector<double> out;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      double keep = p->value[i];
      auto at = [&](double delta) {
        p->value[i] = keep + delta;
        return f();
      };
      double d = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12.0 * h);
      p->value[i] = keep;
      out.push_back(d);
    }
  }
  return out;
}

inline std::vector<double> collect_grads(
    const std::vector<manip::tensorcore::Parameter*>& params) {
  std::vector<double> out;
  for (auto* p : params) out.insert(out.end(), p->grad.begin(), p->grad.end());
  return out;
}

// max over coordinates of |a-b| / max(|a|,|b|,floor); the floor keeps
// finite-difference roundoff on near-zero coordinates from registering as
// relative error
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace testsupport
