#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pwrules/chemgraph.hpp"

namespace pwrules::frag {

// Bond-cutting policy.  The default rules cut acyclic single non-aromatic
// bonds between two non-terminal heavy atoms and keep amide C-N intact;
// alternative rule sets can slot in behind this interface.
class CutRuleSet {
 public:
  virtual ~CutRuleSet() = default;
  virtual bool cuttable(const chem::Molecule& m, int bond) const = 0;
};

class DefaultCutRules : public CutRuleSet {
 public:
  explicit DefaultCutRules(bool keep_amide = true) : keep_amide_(keep_amide) {}
  bool cuttable(const chem::Molecule& m, int bond) const override;

 private:
  bool keep_amide_;
};

struct Fragment {
  std::string fragment_id;  // "frag_<n>"
  std::string key;          // canonical fragment key, attachment points H-capped
  int heavy_atoms = 0;
  long count = 0;           // molecules containing the fragment
  double freq = 0.0;        // count / corpus_size
};

struct FilterConfig {
  double min_freq = 0.001;
  int min_heavy_atoms = 3;
  // acyclic fragments with rotatable_bonds > heavy_atoms * flexibility_ratio
  // are dropped as floppy chains
  double flexibility_ratio = 1.0 / 3.0;
};

struct FragConfig {
  int max_blocks = 3;
  int max_heavy = 25;
  size_t union_limit = 100000;
};

class FragmentLibrary {
 public:
  std::vector<Fragment> fragments;  // ordered by id (descending count)
  long corpus_size = 0;
  FilterConfig filter_config;

  const Fragment* by_id(const std::string& fragment_id) const;
  const Fragment* by_key(const std::string& key) const;
  void rebuild_index();

 private:
  std::map<std::string, size_t> id_index_;
  std::map<std::string, size_t> key_index_;
};

std::set<int> identify_cut_bonds(const chem::Molecule& m, const CutRuleSet& rules);

// Connected unions of <= max_blocks adjacent blocks with <= max_heavy heavy
// atoms, hydrogen-capped and canonicalized; deduplicated per molecule.
std::vector<std::string> enumerate_fragments(const chem::Molecule& m, const std::set<int>& cuts,
                                             const FragConfig& cfg = {});

// one identify+enumerate pass with the default rules
std::vector<std::string> fragment_keys(const chem::Molecule& m, const FragConfig& cfg = {});

FragmentLibrary build_library(const std::vector<chem::Molecule>& corpus,
                              const FilterConfig& filter = {}, const FragConfig& frag = {});

double coverage(const FragmentLibrary& lib, const std::vector<chem::Molecule>& probe);

}  // namespace pwrules::frag
