#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "armflow/errors.hpp"

namespace armflow::eval {

// Lowercase, strip punctuation, collapse whitespace, drop English articles.
std::string normalize_answer(const std::string& text);

struct BenchmarkItem {
  std::string id;
  std::string question;
  std::vector<std::string> references;
  std::string prediction;
  std::string subtask;  // optional grouping label
  std::map<std::string, std::string> choices;  // letter -> option text (MCQ only)
};

// 100 * fraction of items whose normalized prediction matches any normalized
// reference; MCQ items match on the letter first, then on the option text.
double exact_match_score(const std::vector<BenchmarkItem>& items);

struct AggregateReport {
  double overall = 0.0;  // percent
  std::map<std::string, double> per_subtask;
  nlohmann::ordered_json to_json() const;
};

// scores in {0, 0.5, 1}; with labels the overall is the unweighted mean of
// subtask means (macro average)
AggregateReport egothink_aggregate(const std::vector<double>& scores,
                                   const std::vector<std::string>& labels = {});

// scores in {1..5}: S = mean((s - 1) / 4) * 100; macro over categories when
// labels are supplied
AggregateReport sharerobot_aggregate(const std::vector<int>& scores,
                                     const std::vector<std::string>& labels = {});

double macro_average(const std::vector<double>& subtask_percentages);

struct RolloutResult {
  std::string embodiment;
  std::string task;
  bool success = false;
};

struct SuccessReport {
  struct Cell {
    int trials = 0;
    int successes = 0;
    double sr() const { return trials ? double(successes) / trials : 0.0; }
  };
  std::map<std::string, std::map<std::string, Cell>> cells;  // embodiment -> task -> cell

  std::vector<std::string> embodiments() const;
  std::vector<std::string> tasks() const;
  double cell_sr(const std::string& embodiment, const std::string& task) const;
  double embodiment_average(const std::string& embodiment) const;  // percent
  // mean over the full E x U grid, percent; MissingCell when a combination is absent
  double overall() const;

  nlohmann::ordered_json to_json() const;
  static SuccessReport from_json(const nlohmann::json& j);
};

SuccessReport success_report(const std::vector<RolloutResult>& results);

}  // namespace armflow::eval
