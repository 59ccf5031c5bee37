#pragma once

// Built-in biased tabular dataset: two Gaussian clusters per class, a
// sensitive-dependent shift on one informative feature, a noisy proxy of the
// sensitive attribute and a correlated categorical column.

#include <cstdint>

#include "commod/tabular.hpp"

namespace commod::synthetic {

struct SyntheticSpec {
  std::size_t n = 4000;
  std::uint64_t seed = 0;
  double p_sensitive = 0.35;   // P(group = "b"), the s = 1 minority
  double base_rate_s0 = 0.60;  // P(outcome = yes | s = 0)
  double base_rate_s1 = 0.35;
  double proxy_shift = 1.5;    // mean of the proxy feature moves by this for s = 1
  double proxy_noise = 0.7;
  double feature_shift = 0.5;  // s = 1 rows are shifted down on the first feature
  double separation = 1.0;     // scales the distance between class cluster centres
};

struct SyntheticData {
  tabular::RawTable raw;
  tabular::Schema schema;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace commod::synthetic
