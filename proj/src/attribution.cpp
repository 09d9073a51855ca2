#include "pwrules/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "pwrules/errors.hpp"

namespace pwrules::attr {

ScalarFn logit_fn(const model::ModelState& state, int fragment_index) {
  return [&state, fragment_index](const std::vector<std::vector<double>>& x,
                                  std::vector<std::vector<double>>* grad) {
    return model::logit_with_input_gradient(state, x, fragment_index, grad);
  };
}

std::vector<std::vector<double>> integrated_gradients(
    const ScalarFn& fn, const std::vector<std::vector<double>>& x,
    const std::vector<std::vector<double>>& baseline, int steps) {
  if (steps < 2) throw Error(ErrorKind::Value, "integrated gradients need >= 2 steps");
  if (baseline.size() != x.size()) throw Error(ErrorKind::Shape, "baseline shape mismatch");
  for (size_t w = 0; w < x.size(); ++w)
    if (baseline[w].size() != x[w].size())
      throw Error(ErrorKind::Shape, "baseline shape mismatch");

  std::vector<std::vector<double>> acc(x.size());
  for (size_t w = 0; w < x.size(); ++w) acc[w].assign(x[w].size(), 0.0);

  std::vector<std::vector<double>> point(x.size()), grad;
  for (int k = 1; k <= steps; ++k) {
    double alpha = (static_cast<double>(k) - 0.5) / static_cast<double>(steps);
    for (size_t w = 0; w < x.size(); ++w) {
      point[w].resize(x[w].size());
      for (size_t d = 0; d < x[w].size(); ++d)
        point[w][d] = baseline[w][d] + alpha * (x[w][d] - baseline[w][d]);
    }
    fn(point, &grad);
    for (size_t w = 0; w < x.size(); ++w)
      for (size_t d = 0; d < x[w].size(); ++d) acc[w][d] += grad[w][d];
  }
  for (size_t w = 0; w < x.size(); ++w)
    for (size_t d = 0; d < x[w].size(); ++d)
      acc[w][d] = (x[w][d] - baseline[w][d]) * acc[w][d] / static_cast<double>(steps);
  return acc;
}

std::vector<double> condense(const std::vector<std::vector<double>>& attributions) {
  std::vector<double> scores(attributions.size(), 0.0);
  double norm_sq = 0.0;
  for (size_t w = 0; w < attributions.size(); ++w) {
    for (double v : attributions[w]) scores[w] += v;
    norm_sq += scores[w] * scores[w];
  }
  if (norm_sq > 0.0) {
    double norm = std::sqrt(norm_sq);
    for (double& s : scores) s /= norm;
  }
  return scores;
}

std::vector<int> select_words(const std::vector<double>& scores) {
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(ErrorKind::Value, "non-finite attribution score");
  std::vector<int> positive;
  for (size_t i = 0; i < scores.size(); ++i)
    if (scores[i] > 0.0) positive.push_back(static_cast<int>(i));
  if (positive.empty())
    throw Error(ErrorKind::NoPositiveAttribution, "no positive attribution scores");
  std::sort(positive.begin(), positive.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  // summed in sorted order so the cutoff is independent of input ordering
  double total = 0.0;
  for (int i : positive) total += scores[i];
  std::vector<int> chosen;
  double cum = 0.0;
  for (int i : positive) {
    chosen.push_back(i);
    cum += scores[i];
    if (cum > 0.5 * total) break;
  }
  return chosen;
}

std::vector<RuleRecord> extract_rules(const model::ModelState& state,
                                      const std::vector<std::string>& word_keys,
                                      const std::vector<std::vector<double>>& word_embeddings,
                                      const std::vector<std::string>& fragment_ids,
                                      const std::vector<double>& labels,
                                      const std::vector<uint8_t>& observed,
                                      const AttributionConfig& cfg) {
  if (word_keys.size() != word_embeddings.size())
    throw Error(ErrorKind::Shape, "word key / embedding count mismatch");
  if (fragment_ids.size() != static_cast<size_t>(state.cfg.n_fragments) ||
      labels.size() != fragment_ids.size() || observed.size() != fragment_ids.size())
    throw Error(ErrorKind::Shape, "fragment label vector mismatch");
  if (word_keys.empty()) return {};

  std::vector<double> probs = model::predict(state, word_embeddings);
  std::vector<std::vector<double>> baseline(word_embeddings.size());
  for (size_t w = 0; w < word_embeddings.size(); ++w)
    baseline[w].assign(word_embeddings[w].size(), 0.0);

  std::vector<RuleRecord> out;
  for (int f = 0; f < state.cfg.n_fragments; ++f) {
    if (!observed[f] || labels[f] < 0.5) continue;        // positives only
    if (probs[f] <= cfg.pred_threshold) continue;         // prediction must agree
    auto attribs =
        integrated_gradients(logit_fn(state, f), word_embeddings, baseline, cfg.ig_steps);
    std::vector<double> scores = condense(attribs);
    std::vector<int> chosen;
    try {
      chosen = select_words(scores);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NoPositiveAttribution) continue;  // skip, not fatal
      throw;
    }
    for (int w : chosen) {
      RuleRecord r;
      r.word_key = word_keys[w];
      r.fragment_id = fragment_ids[f];
      r.pred_score = probs[f];
      r.attr_score = scores[w];
      r.rule_score = std::sqrt(r.pred_score * r.attr_score);
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace pwrules::attr
