#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pwrules/chemgraph.hpp"
#include "pwrules/fragmenter.hpp"
#include "pwrules/rulebase.hpp"

namespace pwrules::screen {

struct ScoredFragment {
  std::string fragment_id;
  double s_conf = 0.0;
  double s_spec = 0.0;
  double s_comp = 0.0;  // s_conf * s_spec
};

// 1 - (ln count - ln count_min) / (ln count_max - ln count_min); all-equal
// frequencies degenerate to 1
double specificity(const std::string& fragment_id, const frag::FragmentLibrary& lib);

// confidence scores from rule matching joined with library specificity
std::vector<ScoredFragment> score_fragments(const std::vector<rules::FragmentPrediction>& preds,
                                            const frag::FragmentLibrary& lib,
                                            double conf_threshold = 0.5);

struct CoveredFragment {
  std::string fragment_id;
  std::vector<int> atoms;  // matched target atoms, ascending
  double s_comp = 0.0;
};

struct ScreeningResult {
  std::string molecule_id;
  double pwscore = 0.0;
  std::vector<CoveredFragment> covered;   // in acceptance order
  std::vector<std::string> skipped;       // rejected by the atom cap
};

// Greedy coverage in descending s_comp (ties by fragment id): a fragment's
// first embedding is accepted iff every atom is below the per-atom cap.
ScreeningResult pwscore(const std::string& molecule_id, const chem::Molecule& molecule,
                        const std::vector<ScoredFragment>& fragments,
                        const std::map<std::string, chem::Molecule>& patterns, int cap = 10);

enum class Orientation { higher_better, lower_better };

// per-method Z-standardization (population std), orientation-normalized,
// then averaged; a zero-variance method contributes 0 for every molecule
std::map<std::string, double> zscore_fuse(const std::map<std::string, double>& scores_a,
                                          const std::map<std::string, double>& scores_b,
                                          Orientation orient_a, Orientation orient_b);

// ids sorted by score descending, ties by id ascending
std::vector<std::string> rank_by_score(const std::map<std::string, double>& scores);

double enrichment_factor(const std::vector<std::string>& ranked_ids,
                         const std::set<std::string>& actives, double x_percent);

struct MetricReport {
  std::map<double, double> ef;  // x% -> EF
  double precision = 0.0;
  double mcc = 0.0;
  std::optional<double> auc;
  long n_actives = 0;
  long n_total = 0;
};

// precision and MCC under the standard zero-denominator conventions
void binary_metrics(const std::vector<uint8_t>& calls, const std::vector<uint8_t>& truth,
                    double* precision, double* mcc);

// probability a random active outranks a random inactive, ties at 0.5
// (average-rank formulation); degenerate single-class truth -> absent
std::optional<double> rank_auc(const std::vector<double>& scores,
                               const std::vector<uint8_t>& truth);

}  // namespace pwrules::screen
