#include "pwrules/screening.hpp"

#include <algorithm>
#include <cmath>

#include "pwrules/errors.hpp"

namespace pwrules::screen {

double specificity(const std::string& fragment_id, const frag::FragmentLibrary& lib) {
  const frag::Fragment* f = lib.by_id(fragment_id);
  if (!f) throw Error(ErrorKind::UnknownFragment, "fragment '" + fragment_id + "' not in library");
  double lmin = 0.0, lmax = 0.0;
  bool first = true;
  for (const frag::Fragment& fr : lib.fragments) {
    double l = std::log(static_cast<double>(fr.count));
    if (first) {
      lmin = lmax = l;
      first = false;
    } else {
      lmin = std::min(lmin, l);
      lmax = std::max(lmax, l);
    }
  }
  if (lmax == lmin) return 1.0;  // degenerate: all frequencies equal
  double lf = std::log(static_cast<double>(f->count));
  return 1.0 - (lf - lmin) / (lmax - lmin);
}

std::vector<ScoredFragment> score_fragments(const std::vector<rules::FragmentPrediction>& preds,
                                            const frag::FragmentLibrary& lib,
                                            double conf_threshold) {
  std::vector<ScoredFragment> out;
  for (const auto& p : preds) {
    if (p.score < conf_threshold) continue;
    if (!lib.by_id(p.fragment_id)) continue;  // rules may reference a stale library
    ScoredFragment sf;
    sf.fragment_id = p.fragment_id;
    sf.s_conf = p.score;
    sf.s_spec = specificity(p.fragment_id, lib);
    sf.s_comp = sf.s_conf * sf.s_spec;
    out.push_back(std::move(sf));
  }
  return out;
}

ScreeningResult pwscore(const std::string& molecule_id, const chem::Molecule& molecule,
                        const std::vector<ScoredFragment>& fragments,
                        const std::map<std::string, chem::Molecule>& patterns, int cap) {
  if (cap < 1) throw Error(ErrorKind::Value, "cap must be >= 1");
  ScreeningResult res;
  res.molecule_id = molecule_id;

  // matched fragments with their first embedding, descending s_comp
  struct Match {
    const ScoredFragment* frag;
    std::vector<int> atoms;
  };
  std::vector<Match> matches;
  for (const ScoredFragment& sf : fragments) {
    auto pit = patterns.find(sf.fragment_id);
    if (pit == patterns.end())
      throw Error(ErrorKind::UnknownFragment, "no pattern for '" + sf.fragment_id + "'");
    std::vector<chem::AtomMapping> hits = chem::find_substructure(pit->second, molecule);
    if (hits.empty()) continue;
    std::vector<int> atoms = hits.front().pairs;  // first embedding, deterministic order
    std::sort(atoms.begin(), atoms.end());
    matches.push_back({&sf, std::move(atoms)});
  }
  std::sort(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
    if (a.frag->s_comp != b.frag->s_comp) return a.frag->s_comp > b.frag->s_comp;
    return a.frag->fragment_id < b.frag->fragment_id;
  });

  std::vector<int> coverage(molecule.atom_count(), 0);
  for (const Match& m : matches) {
    bool fits = true;
    for (int a : m.atoms)
      if (coverage[a] >= cap) fits = false;
    if (!fits) {
      res.skipped.push_back(m.frag->fragment_id);
      continue;
    }
    for (int a : m.atoms) ++coverage[a];
    res.covered.push_back({m.frag->fragment_id, m.atoms, m.frag->s_comp});
    res.pwscore += m.frag->s_comp;
  }
  return res;
}

std::map<std::string, double> zscore_fuse(const std::map<std::string, double>& scores_a,
                                          const std::map<std::string, double>& scores_b,
                                          Orientation orient_a, Orientation orient_b) {
  if (scores_a.size() != scores_b.size())
    throw Error(ErrorKind::IdMismatch, "score sets differ in size");
  for (const auto& [id, v] : scores_a)
    if (!scores_b.count(id)) throw Error(ErrorKind::IdMismatch, "id '" + id + "' missing");

  auto standardize = [](const std::map<std::string, double>& scores, Orientation orient) {
    std::map<std::string, double> z;
    double mean = 0.0;
    for (const auto& [id, v] : scores) mean += v;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (const auto& [id, v] : scores) var += (v - mean) * (v - mean);
    var /= static_cast<double>(scores.size());  // population variance
    double sd = std::sqrt(var);
    double sign = orient == Orientation::higher_better ? 1.0 : -1.0;
    for (const auto& [id, v] : scores) z[id] = sd == 0.0 ? 0.0 : sign * (v - mean) / sd;
    return z;
  };

  std::map<std::string, double> za = standardize(scores_a, orient_a);
  std::map<std::string, double> zb = standardize(scores_b, orient_b);
  std::map<std::string, double> fused;
  for (const auto& [id, v] : za) fused[id] = (v + zb.at(id)) / 2.0;
  return fused;
}

std::vector<std::string> rank_by_score(const std::map<std::string, double>& scores) {
  std::vector<std::pair<std::string, double>> items(scores.begin(), scores.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [id, s] : items) out.push_back(id);
  return out;
}

double enrichment_factor(const std::vector<std::string>& ranked_ids,
                         const std::set<std::string>& actives, double x_percent) {
  const long n_total = static_cast<long>(ranked_ids.size());
  if (n_total == 0) throw Error(ErrorKind::Value, "empty ranking");
  long n_actives = 0;
  for (const std::string& id : ranked_ids)
    if (actives.count(id)) ++n_actives;
  if (n_actives == 0) throw Error(ErrorKind::NoActives, "no actives in the ranked library");

  long n_x = static_cast<long>(std::ceil(x_percent / 100.0 * static_cast<double>(n_total)));
  if (n_x < 1) n_x = 1;
  long hits_x = 0;
  for (long i = 0; i < n_x; ++i)
    if (actives.count(ranked_ids[i])) ++hits_x;

  double top_density = static_cast<double>(hits_x) / static_cast<double>(n_x);
  double global_density = static_cast<double>(n_actives) / static_cast<double>(n_total);
  return top_density / global_density;
}

void binary_metrics(const std::vector<uint8_t>& calls, const std::vector<uint8_t>& truth,
                    double* precision, double* mcc) {
  if (calls.size() != truth.size()) throw Error(ErrorKind::Shape, "calls/truth size mismatch");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < calls.size(); ++i) {
    if (calls[i] && truth[i])
      ++tp;
    else if (calls[i] && !truth[i])
      ++fp;
    else if (!calls[i] && truth[i])
      ++fn;
    else
      ++tn;
  }
  if (precision) *precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  if (mcc) {
    double denom = std::sqrt(tp + fp) * std::sqrt(tp + fn) * std::sqrt(tn + fp) * std::sqrt(tn + fn);
    *mcc = denom == 0.0 ? 0.0 : (tp * tn - fp * fn) / denom;
  }
}

std::optional<double> rank_auc(const std::vector<double>& scores,
                               const std::vector<uint8_t>& truth) {
  if (scores.size() != truth.size()) throw Error(ErrorKind::Shape, "scores/truth size mismatch");
  long n_pos = 0, n_neg = 0;
  for (uint8_t t : truth) (t ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;  // DegenerateTruth

  // average ranks (midranks for ties), ascending scores
  const size_t n = scores.size();
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) rank[idx[k]] = mid;
    i = j;
  }
  double rank_sum_pos = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (truth[i]) rank_sum_pos += rank[i];
  double auc = (rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
               (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return auc;
}

}  // namespace pwrules::screen
