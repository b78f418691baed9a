#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace oracle {

// Five-point central-difference Jacobian of f: R^n -> R^m with relative steps.
template <typename F>
Eigen::MatrixXd central_jacobian(F&& f, const Eigen::VectorXd& p, double rel_step = 1e-4) {
  const Eigen::VectorXd f0 = f(p);
  Eigen::MatrixXd j(f0.size(), p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double h = rel_step * std::max(std::abs(p[k]), 1e-3);
    auto at = [&](double offset) {
      Eigen::VectorXd q = p;
      q[k] += offset;
      return f(q);
    };
    j.col(k) = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
  }
  return j;
}

}  // namespace oracle
