#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "commod/debias.hpp"

namespace commod::debias::detail {

// Mean BCE of the adversary on (z [, y]) vs s, with optional gradients.
double adversary_loss(const Adversary& adv, std::span<const double> z, std::span<const int> y,
                      std::span<const int> s, std::vector<double>* grad_params, std::vector<double>* grad_z);

void check_finite(const LossComponents& l, const std::string& where);
std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
void fill_epoch_metrics(EpochRecord& rec, std::span<const double> z, const TrainingData& data);

}  // namespace commod::debias::detail
