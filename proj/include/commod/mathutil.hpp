#pragma once

#include <cmath>

namespace commod {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Binary cross-entropy of sigmoid(z) against a {0,1} target.
inline double bce_with_logit(double z, double target) { return softplus(z) - target * z; }

/// d/dz of bce_with_logit.
inline double bce_with_logit_grad(double z, double target) { return sigmoid(z) - target; }

}  // namespace commod
