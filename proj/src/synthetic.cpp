#include "commod/synthetic.hpp"

#include <array>
#include <charconv>
#include <random>

#include "commod/error.hpp"

namespace commod::synthetic {

namespace {

std::string fmt(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 6);
  return std::string(buf.data(), r.ptr);
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 10) throw Error("synthetic: n must be at least 10");
  for (double p : {spec.p_sensitive, spec.base_rate_s0, spec.base_rate_s1}) {
    if (!(p > 0.0 && p < 1.0)) throw Error("synthetic: rates must lie strictly inside (0, 1)");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);

  // cluster centres of (x1, x2) per class
  const double centres[2][2][2] = {{{-1.0, -0.6}, {-0.2, -1.4}}, {{1.2, 0.8}, {0.4, 1.6}}};
  const char* zones[] = {"north", "south", "east"};

  SyntheticData out;
  out.schema.label = "outcome";
  out.schema.sensitive = "group";
  out.schema.positive_label = "yes";
  out.raw.column_names = {"x1", "x2", "proxy", "noise", "zone", "group", "outcome"};
  out.raw.kinds = {tabular::ColumnKind::numeric, tabular::ColumnKind::numeric, tabular::ColumnKind::numeric,
                   tabular::ColumnKind::numeric, tabular::ColumnKind::categorical, tabular::ColumnKind::categorical,
                   tabular::ColumnKind::categorical};
  out.raw.rows.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int s = U(rng) < spec.p_sensitive ? 1 : 0;
    const int y = U(rng) < (s == 1 ? spec.base_rate_s1 : spec.base_rate_s0) ? 1 : 0;
    const int c = U(rng) < 0.5 ? 1 : 0;
    const double x1 = spec.separation * centres[y][c][0] + N(rng) - spec.feature_shift * s;
    const double x2 = spec.separation * centres[y][c][1] + N(rng);
    const double proxy = spec.proxy_shift * s + spec.proxy_noise * N(rng);
    const double noise = N(rng);
    const double u = U(rng);
    int zone;
    if (s == 1) zone = u < 0.6 ? 0 : (u < 0.8 ? 1 : 2);
    else zone = u < 0.2 ? 0 : (u < 0.6 ? 1 : 2);
    out.raw.rows.push_back({fmt(x1), fmt(x2), fmt(proxy), fmt(noise), zones[zone], s ? "b" : "a", y ? "yes" : "no"});
  }
  return out;
}

}  // namespace commod::synthetic
