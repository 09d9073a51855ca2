#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "pwrules/attribution.hpp"
#include "pwrules/dataset.hpp"

namespace pwrules::rules {

using attr::RuleRecord;

enum class Aggregation { joint, max, avg };

Aggregation aggregation_from_string(const std::string& s);
const char* to_string(Aggregation a);

class RuleDB {
 public:
  // Deduplicates on (word_key, fragment_id), keeping the highest rule_score.
  explicit RuleDB(std::vector<RuleRecord> records);
  RuleDB() = default;

  const std::vector<RuleRecord>& records() const { return records_; }
  std::vector<const RuleRecord*> by_word(const std::string& word_key) const;
  std::vector<const RuleRecord*> by_fragment(const std::string& fragment_id) const;
  size_t size() const { return records_.size(); }

 private:
  std::vector<RuleRecord> records_;  // sorted by (word_key, fragment_id)
  std::map<std::string, std::vector<size_t>> word_index_;
  std::map<std::string, std::vector<size_t>> fragment_index_;
};

// reference corpus for accuracy evaluation: each protein's segmented word
// keys plus its observed fragment labels
struct ReferenceSet {
  std::map<std::string, std::set<std::string>> protein_words;
  data::LabelMatrix labels;
};

struct AccuracyResult {
  double accuracy = 0.0;
  bool flagged = false;  // empty denominator
};

AccuracyResult rule_accuracy(const RuleRecord& rule, const ReferenceSet& ref);

// fills accuracy on every record
RuleDB compute_accuracies(const RuleDB& db, const ReferenceSet& ref);

// drops rules with accuracy < min_accuracy (exactly min_accuracy retained);
// unset accuracy counts as flagged zero
RuleDB filter_rules(const RuleDB& db, double min_accuracy = 0.5);

// fragment_id -> rule scores of matched rules (word keys deduplicated first)
std::map<std::string, std::vector<double>> match_rules(const std::vector<std::string>& query_words,
                                                       const RuleDB& db);

double aggregate(const std::vector<double>& scores, Aggregation method);

struct FragmentPrediction {
  std::string fragment_id;
  std::vector<double> matched_rules;
  double score = 0.0;
  bool called = false;
  int n_matched = 0;
};

// per-fragment aggregate scores, sorted descending (ties by fragment id);
// called = score >= threshold
std::vector<FragmentPrediction> predict_privileged(const std::vector<std::string>& query_words,
                                                   const RuleDB& db,
                                                   Aggregation method = Aggregation::joint,
                                                   double threshold = 0.5);

}  // namespace pwrules::rules
