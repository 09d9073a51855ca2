#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pwrules/classifier.hpp"

namespace pwrules::attr {

// scalar function of a word-embedding matrix returning its value and,
// when grad is non-null, d value / d x
using ScalarFn = std::function<double(const std::vector<std::vector<double>>& x,
                                      std::vector<std::vector<double>>* grad)>;

// wraps one output logit of the classifier
ScalarFn logit_fn(const model::ModelState& state, int fragment_index);

// Midpoint-rule integrated gradients: (x - x') .* mean_k dF/dx at
// x' + (k-0.5)/m * (x - x'), k = 1..m.
std::vector<std::vector<double>> integrated_gradients(
    const ScalarFn& fn, const std::vector<std::vector<double>>& x,
    const std::vector<std::vector<double>>& baseline, int steps);

// per-word sums over the embedding dimension, L2-normalized (zero vector
// passes through unchanged)
std::vector<double> condense(const std::vector<std::vector<double>>& attributions);

// Shortest prefix of the descending positive scores whose sum exceeds half
// the total positive attribution; ties broken by word position.
std::vector<int> select_words(const std::vector<double>& scores);

struct RuleRecord {
  std::string word_key;
  std::string fragment_id;
  double pred_score = 0.0;
  double attr_score = 0.0;
  double rule_score = 0.0;
  std::optional<double> accuracy;
  bool accuracy_flagged = false;
};

struct AttributionConfig {
  int ig_steps = 50;
  double pred_threshold = 0.5;  // prediction must agree with the 1-label
};

// Rules for one protein: for every fragment labeled 1 whose predicted
// probability clears the threshold, run IG, condense, select words, and emit
// one record per selected word.  Fragments with no positive attribution are
// skipped.
std::vector<RuleRecord> extract_rules(const model::ModelState& state,
                                      const std::vector<std::string>& word_keys,
                                      const std::vector<std::vector<double>>& word_embeddings,
                                      const std::vector<std::string>& fragment_ids,
                                      const std::vector<double>& labels,
                                      const std::vector<uint8_t>& observed,
                                      const AttributionConfig& cfg = {});

}  // namespace pwrules::attr
