#pragma once

#include <map>

#include "armflow/params.hpp"

namespace armflow::nn {

// AdamW with decoupled weight decay, linear warm-up and cosine decay.
class AdamW {
 public:
  struct Config {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // <= 0 disables clipping
    double warmup_ratio = 0.03;
    int64_t total_steps = 1000;
  };

  explicit AdamW(Config cfg) : cfg_(cfg) {}

  double lr_at(int64_t step) const;
  int64_t steps_taken() const { return t_; }

  // Consumes the gradients currently stored on non-frozen parameters.
  void step(ParamStore& params);

  // Moment state round-trips through checkpoints.
  std::map<std::string, Mat> export_state() const;
  void import_state(const std::map<std::string, Mat>& state, int64_t steps_taken);

 private:
  Config cfg_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<Mat, Mat>> moments_;
};

}  // namespace armflow::nn
