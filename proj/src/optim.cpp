#include "armflow/optim.hpp"

#include <cmath>

namespace armflow::nn {

double AdamW::lr_at(int64_t step) const {
  const int64_t warmup = std::max<int64_t>(1, int64_t(cfg_.warmup_ratio * double(cfg_.total_steps)));
  if (step < warmup) return cfg_.lr * double(step + 1) / double(warmup);
  const double progress =
      double(step - warmup) / std::max<double>(1.0, double(cfg_.total_steps - warmup));
  return cfg_.lr * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, progress)));
}

void AdamW::step(ParamStore& params) {
  const double lr = lr_at(t_);
  ++t_;

  double sq_norm = 0.0;
  for (const auto& name : params.names()) {
    const Tensor& p = params.at(name);
    if (params.is_frozen(name) || !p.has_grad()) continue;
    sq_norm += p.grad().squaredNorm();
  }
  double clip_factor = 1.0;
  if (cfg_.clip_norm > 0.0) {
    const double norm = std::sqrt(sq_norm);
    if (norm > cfg_.clip_norm) clip_factor = cfg_.clip_norm / (norm + 1e-12);
  }

  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));

  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    if (params.is_frozen(name) || !p.has_grad()) continue;
    Mat g = p.grad() * clip_factor;
    auto& [m, v] = moments_[name];
    if (m.size() == 0) {
      m = Mat::Zero(g.rows(), g.cols());
      v = Mat::Zero(g.rows(), g.cols());
    }
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat update = (m / bc1).array() / ((v / bc2).array().sqrt() + cfg_.eps);
    Mat& val = p.leaf_value();
    val -= lr * update;
    if (cfg_.weight_decay > 0.0) val -= (lr * cfg_.weight_decay) * val;
  }
}

std::map<std::string, Mat> AdamW::export_state() const {
  std::map<std::string, Mat> out;
  for (const auto& [name, mv] : moments_) {
    out["m/" + name] = mv.first;
    out["v/" + name] = mv.second;
  }
  return out;
}

void AdamW::import_state(const std::map<std::string, Mat>& state, int64_t steps_taken) {
  moments_.clear();
  for (const auto& [key, mat] : state) {
    if (key.rfind("m/", 0) == 0) moments_[key.substr(2)].first = mat;
    else if (key.rfind("v/", 0) == 0) moments_[key.substr(2)].second = mat;
  }
  t_ = steps_taken;
}

}  // namespace armflow::nn
