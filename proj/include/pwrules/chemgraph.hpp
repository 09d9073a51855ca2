#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pwrules::chem {

enum class BondOrder : uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  std::string element;     // element symbol, or "*" for an attachment wildcard
  int charge = 0;
  bool aromatic = false;
  int h_count = 0;         // attached hydrogens, resolved at parse time
  bool wildcard = false;
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::Single;
};

// Hydrogen-suppressed labeled molecular graph.  Immutable after finalize();
// all free functions below are pure and safe to run concurrently on shared
// molecules.
class Molecule {
 public:
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::string source_text;
  std::vector<std::string> warnings;

  // Builds adjacency and ring-membership caches; validates bond endpoints,
  // duplicate bonds and the aromatic-bond invariant.
  void finalize();

  int atom_count() const { return static_cast<int>(atoms.size()); }
  int bond_count() const { return static_cast<int>(bonds.size()); }
  int heavy_atom_count() const;

  int degree(int atom) const { return static_cast<int>(adj_[atom].size()); }
  const std::vector<int>& incident_bonds(int atom) const { return adj_[atom]; }
  int other_end(int bond, int atom) const {
    return bonds[bond].a == atom ? bonds[bond].b : bonds[bond].a;
  }
  // -1 when no bond connects the two atoms
  int bond_between(int a, int b) const;
  bool bond_in_ring(int bond) const { return ring_bond_[bond]; }
  bool connected() const;

 private:
  std::vector<std::vector<int>> adj_;
  std::vector<bool> ring_bond_;
};

struct DescriptorSet {
  double mw = 0.0;
  int hbd = 0;
  int hba = 0;
  int rotatable_bonds = 0;
  std::optional<double> logp;
  std::optional<double> tpsa;
};

// pairs[i] = target atom matched to pattern atom i
struct AtomMapping {
  std::vector<int> pairs;
};

// Single connected component; throws on '.' separators.
Molecule parse_smiles(std::string_view text);

// Splits multi-component input on '.'.
std::vector<Molecule> parse_components(std::string_view text);

// Canonical SMILES-form key: equal for isomorphic molecules, re-parseable,
// stable across runs.  Canonical ranking by iterative neighborhood refinement
// with individualization on ties, string minimization as the tie-breaker.
std::string canonical_key(const Molecule& m);

// All subgraph-monomorphism embeddings of pattern in target (element,
// aromaticity and bond orders must match; '*' pattern atoms match anything),
// deduplicated to unique target atom sets, ordered by sorted atom set.
std::vector<AtomMapping> find_substructure(const Molecule& pattern, const Molecule& target,
                                           size_t max_hits = 10000);

bool has_substructure(const Molecule& pattern, const Molecule& target);

DescriptorSet descriptors(const Molecule& m);

// provider-supplied logp/tpsa joined onto the built-in counts
DescriptorSet descriptors(const Molecule& m,
                          const std::optional<std::pair<double, double>>& logp_tpsa);

bool rule_of_three(const DescriptorSet& d);

double atomic_mass(const std::string& element);

// true for acyclic single non-amide bonds between two non-terminal heavy
// atoms; shared by the rotatable-bond count and the fragmenter's cut rules
bool is_amide_cn(const Molecule& m, int bond);

}  // namespace pwrules::chem
