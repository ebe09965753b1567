#pragma once

#include <map>
#include <string>

#include "pacg/tensor.hpp"

namespace pacg {

// Named trainable leaves. Names are hierarchical ("scg.p3.rgb_refiner.dw.weight");
// the map keeps them sorted, which fixes checkpoint record order.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return items_.count(name) > 0; }

  void zero_grad();
  long long scalar_count() const;
  size_t size() const { return items_.size(); }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  // Text checkpoint: header "pacg-ckpt v1", then per parameter a line
  // "<name> <n> <c> <h> <w>" followed by a line of round-trip decimals.
  void save(const std::string& path) const;
  // Loads into an already-constructed set; rejects unknown names, missing
  // names and shape mismatches.
  void load(const std::string& path);

 private:
  std::map<std::string, Tensor> items_;
};

}  // namespace pacg
