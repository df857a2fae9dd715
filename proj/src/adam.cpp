#include "alignreid/adam.hpp"

#include <cmath>

namespace areid {

void ParamStore::add(std::string name, Array value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  entries_.push_back({std::move(name), std::move(value)});
}

Array& ParamStore::get(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.value;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Array& ParamStore::get(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw std::out_of_range("no parameter named " + std::string(name));
}

bool ParamStore::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParamStore::operator==(const ParamStore& other) const {
  return entries_ == other.entries_;
}

AdamState AdamState::for_params(const ParamStore& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& e : params.entries()) {
    s.first_moment.emplace_back(e.value.shape());
    s.second_moment.emplace_back(e.value.shape());
  }
  return s;
}

void adam_step(ParamStore& params, std::span<const Array> grads, AdamState& state) {
  auto& entries = params.entries();
  if (grads.size() != entries.size() || state.first_moment.size() != entries.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(entries.size()) +
                                " parameters, " + std::to_string(grads.size()) +
                                " gradients, " + std::to_string(state.first_moment.size()) +
                                " moment slots");
  }
  if (!(state.config.rate > 0.0)) throw std::invalid_argument("adam_step: rate must be > 0");
  for (std::size_t p = 0; p < entries.size(); ++p) {
    if (grads[p].shape() != entries[p].value.shape()) {
      throw std::invalid_argument("adam_step: gradient shape " + shape_str(grads[p].shape()) +
                                  " does not match parameter " + entries[p].name);
    }
    if (!grads[p].all_finite()) {
      throw NonFiniteGradient("non-finite gradient for parameter " + entries[p].name);
    }
  }

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    auto w = entries[p].value.values();
    auto m = state.first_moment[p].values();
    auto v = state.second_moment[p].values();
    const auto g = grads[p].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      w[i] -= c.rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace areid
