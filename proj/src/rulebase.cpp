#include "pwrules/rulebase.hpp"

#include <algorithm>

#include "pwrules/errors.hpp"

namespace pwrules::rules {

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "joint") return Aggregation::joint;
  if (s == "max") return Aggregation::max;
  if (s == "avg") return Aggregation::avg;
  throw Error(ErrorKind::Value, "unknown aggregation '" + s + "'");
}

const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::joint: return "joint";
    case Aggregation::max: return "max";
    case Aggregation::avg: return "avg";
  }
  return "?";
}

RuleDB::RuleDB(std::vector<RuleRecord> records) {
  // dedup (word, fragment) keeping the highest-scoring emission
  std::map<std::pair<std::string, std::string>, RuleRecord> best;
  for (RuleRecord& r : records) {
    auto key = std::make_pair(r.word_key, r.fragment_id);
    auto it = best.find(key);
    if (it == best.end() || r.rule_score > it->second.rule_score) best[key] = std::move(r);
  }
  records_.reserve(best.size());
  for (auto& [key, r] : best) records_.push_back(std::move(r));
  for (size_t i = 0; i < records_.size(); ++i) {
    word_index_[records_[i].word_key].push_back(i);
    fragment_index_[records_[i].fragment_id].push_back(i);
  }
}

std::vector<const RuleRecord*> RuleDB::by_word(const std::string& word_key) const {
  std::vector<const RuleRecord*> out;
  auto it = word_index_.find(word_key);
  if (it == word_index_.end()) return out;
  for (size_t i : it->second) out.push_back(&records_[i]);
  return out;
}

std::vector<const RuleRecord*> RuleDB::by_fragment(const std::string& fragment_id) const {
  std::vector<const RuleRecord*> out;
  auto it = fragment_index_.find(fragment_id);
  if (it == fragment_index_.end()) return out;
  for (size_t i : it->second) out.push_back(&records_[i]);
  return out;
}

AccuracyResult rule_accuracy(const RuleRecord& rule, const ReferenceSet& ref) {
  long num = 0, den = 0;
  for (const auto& [protein, words] : ref.protein_words) {
    if (!words.count(rule.word_key)) continue;
    auto label = ref.labels.label(protein, rule.fragment_id);
    if (!label) continue;  // NA excluded from the denominator
    ++den;
    if (*label == 1) ++num;
  }
  AccuracyResult r;
  if (den == 0) {
    r.accuracy = 0.0;
    r.flagged = true;
  } else {
    r.accuracy = static_cast<double>(num) / static_cast<double>(den);
  }
  return r;
}

RuleDB compute_accuracies(const RuleDB& db, const ReferenceSet& ref) {
  std::vector<RuleRecord> out = db.records();
  for (RuleRecord& r : out) {
    AccuracyResult a = rule_accuracy(r, ref);
    r.accuracy = a.accuracy;
    r.accuracy_flagged = a.flagged;
  }
  return RuleDB(std::move(out));
}

RuleDB filter_rules(const RuleDB& db, double min_accuracy) {
  std::vector<RuleRecord> kept;
  for (const RuleRecord& r : db.records()) {
    double acc = r.accuracy ? *r.accuracy : 0.0;
    if (acc >= min_accuracy) kept.push_back(r);
  }
  return RuleDB(std::move(kept));
}

std::map<std::string, std::vector<double>> match_rules(const std::vector<std::string>& query_words,
                                                       const RuleDB& db) {
  std::set<std::string> keys(query_words.begin(), query_words.end());
  std::map<std::string, std::vector<double>> out;
  for (const std::string& key : keys)
    for (const RuleRecord* r : db.by_word(key)) out[r->fragment_id].push_back(r->rule_score);
  return out;
}

double aggregate(const std::vector<double>& scores, Aggregation method) {
  if (scores.empty()) throw Error(ErrorKind::Value, "aggregate needs >= 1 score");
  for (double s : scores)
    if (s < 0.0 || s > 1.0) throw Error(ErrorKind::Value, "rule score outside [0,1]");
  switch (method) {
    case Aggregation::joint: {
      double miss = 1.0;
      for (double s : scores) miss *= 1.0 - s;
      return 1.0 - miss;
    }
    case Aggregation::max: {
      double m = 0.0;
      for (double s : scores) m = std::max(m, s);
      return m;
    }
    case Aggregation::avg: {
      double sum = 0.0;
      for (double s : scores) sum += s;
      return sum / static_cast<double>(scores.size());
    }
  }
  throw Error(ErrorKind::Value, "bad aggregation");
}

std::vector<FragmentPrediction> predict_privileged(const std::vector<std::string>& query_words,
                                                   const RuleDB& db, Aggregation method,
                                                   double threshold) {
  std::map<std::string, std::vector<double>> matches = match_rules(query_words, db);
  std::vector<FragmentPrediction> out;
  out.reserve(matches.size());
  for (auto& [fid, scores] : matches) {
    FragmentPrediction p;
    p.fragment_id = fid;
    p.matched_rules = scores;
    p.n_matched = static_cast<int>(scores.size());
    p.score = aggregate(scores, method);
    p.called = p.score >= threshold;
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const FragmentPrediction& a, const FragmentPrediction& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.fragment_id < b.fragment_id;
  });
  return out;
}

}  // namespace pwrules::rules
