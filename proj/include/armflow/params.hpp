#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "armflow/tensor.hpp"

namespace armflow::nn {

// Named parameter map. Frozen paths never receive gradients and are
// guaranteed bitwise stable across optimization steps.
class ParamStore {
 public:
  Tensor& declare(const std::string& name, const Shape& shape,
                  const std::function<void(Mat&)>& init);

  // normal(0, 1/sqrt(fan_in)) weight
  Tensor& weight(const std::string& name, int in, int out, const Rng& rng);
  Tensor& zeros(const std::string& name, const Shape& shape);
  Tensor& ones(const std::string& name, const Shape& shape);
  Tensor& normal(const std::string& name, const Shape& shape, const Rng& rng, double stddev);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return map_.count(name) != 0; }

  void freeze_prefix(const std::string& prefix);
  bool is_frozen(const std::string& name) const { return frozen_.count(name) != 0; }
  const std::set<std::string>& frozen_paths() const { return frozen_; }
  void mark_frozen(const std::string& name);

  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  size_t size() const { return map_.size(); }

  void zero_grads();
  int64_t param_count() const;

  // SHA-256 over (path, raw little-endian doubles) in sorted path order.
  std::string hash_prefix(const std::string& prefix = "") const;

  std::map<std::string, Tensor>& raw() { return map_; }
  const std::map<std::string, Tensor>& raw() const { return map_; }

 private:
  std::map<std::string, Tensor> map_;
  std::set<std::string> frozen_;
};

}  // namespace armflow::nn
