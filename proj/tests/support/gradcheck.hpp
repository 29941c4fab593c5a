#pragma once

// Central finite-difference oracle for gradient checks. Independent of the
// tape: numeric derivatives come only from re-evaluating the forward build
// at perturbed parameter values with no tape active.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kea/tensor.hpp"

namespace kea::testing {

struct GradCheckReport {
  double max_abs_diff = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string worst_at;

  bool ok() const { return failures == 0; }
};

// build_loss() must construct the scalar loss from the current parameter
// values through kea ops. Analytic gradients are taken once under a tape;
// each parameter element is then perturbed by +/-h and the loss re-built
// tape-free for the centered difference.
inline GradCheckReport check_gradients(std::vector<Tensor> params,
                                       const std::function<Tensor()>& build_loss,
                                       double h = 1e-5, double rtol = 1e-4, double atol = 1e-7) {
  std::vector<std::vector<double>> analytic;
  {
    for (auto& p : params) p.zero_grad();
    Tape tape;
    Tensor loss = build_loss();
    backward(loss);
    for (auto& p : params) analytic.push_back(p.grad());
  }

  GradCheckReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double keep = p.data()[j];
      p.data()[j] = keep + h;
      const double up = build_loss().value();
      p.data()[j] = keep - h;
      const double down = build_loss().value();
      p.data()[j] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][j];
      const double diff = std::abs(a - numeric);
      const double tol = std::max(atol, rtol * std::max(std::abs(a), std::abs(numeric)));
      ++rep.checked;
      if (diff > rep.max_abs_diff) {
        rep.max_abs_diff = diff;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
        rep.worst_at = "param " + std::to_string(pi) + " elem " + std::to_string(j);
      }
      if (diff > tol) ++rep.failures;
    }
  }
  return rep;
}

inline Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace kea::testing
