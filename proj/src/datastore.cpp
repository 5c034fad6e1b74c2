#include "armflow/datastore.hpp"

#include <algorithm>
#include <cmath>

namespace armflow::data {

SamplerSpec build_sampler(const std::vector<std::pair<std::string, int64_t>>& datasets) {
  if (datasets.empty()) throw EmptyDataset("build_sampler: no datasets");
  SamplerSpec spec;
  const double inv_c = 1.0 / double(datasets.size());
  for (const auto& [id, size] : datasets) {
    if (size < 1) throw EmptyDataset("build_sampler: dataset " + id + " is empty");
    SamplerSpec::Entry e;
    e.dataset_id = id;
    e.size = size;
    e.aggregate = inv_c;
    e.per_sample_prob = inv_c / double(size);
    spec.entries.push_back(e);
  }
  return spec;
}

std::pair<int, int64_t> SamplerSpec::draw(const Rng& rng, uint64_t counter) const {
  const int c = int(entries.size());
  const int dataset = std::min(c - 1, int(rng.uniform(2 * counter) * c));
  const int64_t n = entries[dataset].size;
  const int64_t sample = std::min<int64_t>(n - 1, int64_t(rng.uniform(2 * counter + 1) * double(n)));
  return {dataset, sample};
}

double SamplerSpec::total_mass() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.aggregate;
  return s;
}

std::vector<int> pick_uniform_indices(int n, int m) {
  std::vector<int> out;
  if (n <= 0 || m <= 0) return out;
  if (m == 1) {
    out.push_back(0);
    return out;
  }
  out.reserve(m);
  for (int i = 0; i < m; ++i)
    out.push_back(int(std::lround(double(i) * double(n - 1) / double(m - 1))));
  return out;
}

std::vector<int> sample_frames(int num_frames_available, double frame_interval_s,
                               double duration_s, const FrameSampleOptions& opts) {
  if (duration_s <= 0.0) throw Error("sample_frames: non-positive duration");
  if (num_frames_available < 1) throw TooFewFrames("sample_frames: no frames");
  if (frame_interval_s <= 0.0) throw Error("sample_frames: non-positive interval");

  // candidate frames at the interval marks
  const int n_candidates = int(std::floor(duration_s / frame_interval_s)) + 1;
  std::vector<int> candidates;
  candidates.reserve(n_candidates);
  for (int i = 0; i < n_candidates; ++i) {
    const double t = double(i) * frame_interval_s;
    int idx = 0;
    if (num_frames_available > 1)
      idx = int(std::lround(t / duration_s * double(num_frames_available - 1)));
    candidates.push_back(std::clamp(idx, 0, num_frames_available - 1));
  }

  const int m = (duration_s < opts.short_threshold_s) ? opts.short_frames : opts.long_frames;
  std::vector<int> out;
  if (int(candidates.size()) >= m) {
    for (int pos : pick_uniform_indices(int(candidates.size()), m))
      out.push_back(candidates[pos]);
  } else {
    if (!opts.pad_by_repetition)
      throw TooFewFrames("sample_frames: " + std::to_string(candidates.size()) +
                         " candidates < " + std::to_string(m));
    out = candidates;
    while (int(out.size()) < m) out.push_back(candidates.back());
  }
  return out;
}

}  // namespace armflow::data
