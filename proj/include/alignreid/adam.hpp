#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "alignreid/params.hpp"

namespace areid {

struct AdamConfig {
  double rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  std::uint64_t step = 0;

  // Zero moments shaped like `params`.
  static AdamState for_params(const ParamStore& params, AdamConfig config);
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One bias-corrected Adam update. `grads` is index-aligned with the store.
void adam_step(ParamStore& params, std::span<const Array> grads, AdamState& state);

}  // namespace areid
