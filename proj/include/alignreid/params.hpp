#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "alignreid/array.hpp"

namespace areid {

struct NamedArray {
  std::string name;
  Array value;
};

// Ordered, named parameter set. Order is the checkpoint order and the order
// optimizer state is kept in.
class ParamStore {
 public:
  void add(std::string name, Array value);
  Array& get(std::string_view name);
  const Array& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::vector<NamedArray>& entries() { return entries_; }
  const std::vector<NamedArray>& entries() const { return entries_; }
  std::size_t scalar_count() const;

  bool operator==(const ParamStore&) const;

 private:
  std::vector<NamedArray> entries_;
};

inline bool operator==(const NamedArray& a, const NamedArray& b) {
  return a.name == b.name && a.value == b.value;
}

}  // namespace areid
