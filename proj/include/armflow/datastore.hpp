#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "armflow/errors.hpp"
#include "armflow/rng.hpp"

namespace armflow::data {

// Equal-dataset-probability weighted sampling: every sample of dataset i is
// drawn with probability 1 / (C * |D_i|).
struct SamplerSpec {
  struct Entry {
    std::string dataset_id;
    int64_t size = 0;
    double per_sample_prob = 0.0;
    double aggregate = 0.0;  // per-dataset mass, exactly 1/C
  };
  std::vector<Entry> entries;

  // two-stage draw (uniform dataset, then uniform sample) — equivalent to the
  // per-sample probability table
  std::pair<int, int64_t> draw(const Rng& rng, uint64_t counter) const;

  double total_mass() const;
};

SamplerSpec build_sampler(const std::vector<std::pair<std::string, int64_t>>& datasets);

// round(i * (n - 1) / (m - 1)) selection over n candidates
std::vector<int> pick_uniform_indices(int n, int m);

struct FrameSampleOptions {
  double short_threshold_s = 4.0;  // below: 4 frames, else 8
  int short_frames = 4;
  int long_frames = 8;
  bool pad_by_repetition = true;
};

// Candidate frames are taken at frame_interval_s marks over the video, then 4
// or 8 of them are selected uniformly; short candidate lists repeat the last
// frame (unless padding is disabled, which raises TooFewFrames).
std::vector<int> sample_frames(int num_frames_available, double frame_interval_s,
                               double duration_s, const FrameSampleOptions& opts = {});

}  // namespace armflow::data
