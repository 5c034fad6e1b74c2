#include "armflow/params.hpp"

#include "armflow/sha256.hpp"

namespace armflow::nn {

Tensor& ParamStore::declare(const std::string& name, const Shape& shape,
                            const std::function<void(Mat&)>& init) {
  if (map_.count(name)) throw Error("ParamStore: duplicate parameter " + name);
  Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
  init(t.leaf_value());
  if (finite_checks_enabled() && !t.value().allFinite())
    throw NonFinite("ParamStore: non-finite init for " + name);
  auto [it, ok] = map_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::weight(const std::string& name, int in, int out, const Rng& rng) {
  const Rng r = rng.derive(name);
  const double s = 1.0 / std::sqrt(double(in));
  return declare(name, Shape{in, out}, [&](Mat& m) {
    for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = s * r.normal(uint64_t(i));
  });
}

Tensor& ParamStore::zeros(const std::string& name, const Shape& shape) {
  return declare(name, shape, [](Mat&) {});
}

Tensor& ParamStore::ones(const std::string& name, const Shape& shape) {
  return declare(name, shape, [](Mat& m) { m.setOnes(); });
}

Tensor& ParamStore::normal(const std::string& name, const Shape& shape, const Rng& rng,
                           double stddev) {
  const Rng r = rng.derive(name);
  return declare(name, shape, [&](Mat& m) {
    for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = stddev * r.normal(uint64_t(i));
  });
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw Error("ParamStore: unknown parameter " + name);
  return it->second;
}

void ParamStore::freeze_prefix(const std::string& prefix) {
  for (auto& [name, t] : map_) {
    if (name.rfind(prefix, 0) == 0) {
      frozen_.insert(name);
      t.set_requires_grad(false);
    }
  }
}

void ParamStore::mark_frozen(const std::string& name) {
  frozen_.insert(name);
  at(name).set_requires_grad(false);
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(map_.size());
  for (const auto& [name, t] : map_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : map_)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : map_) t.zero_grad();
}

int64_t ParamStore::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : map_) n += t.size();
  return n;
}

std::string ParamStore::hash_prefix(const std::string& prefix) const {
  Sha256 h;
  for (const auto& [name, t] : map_) {
    if (name.rfind(prefix, 0) != 0) continue;
    h.update(name);
    h.update(t.value().data(), sizeof(Scalar) * size_t(t.value().size()));
  }
  return h.hex_digest();
}

}  // namespace armflow::nn
