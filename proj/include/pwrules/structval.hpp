#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pwrules/chemgraph.hpp"

namespace pwrules::structval {

using Point = std::array<double, 3>;

struct Residue {
  int number = 0;
  char insertion_code = ' ';
  char code = 'X';  // one-letter
  Point ca{0.0, 0.0, 0.0};
};

struct ChainModel {
  char chain_id = 'A';
  std::vector<Residue> residues;  // file order

  std::string sequence() const;
};

struct LigandModel {
  chem::Molecule mol;          // heavy atoms only
  std::vector<Point> coords;   // aligned with mol.atoms
};

// ATOM records, CA atoms, altloc ' ' or 'A', first model only; nonstandard
// residues map to 'X'
std::vector<ChainModel> parse_pdb(std::istream& in);
std::vector<ChainModel> parse_pdb_file(const std::string& path);

// V2000 connection table; explicit hydrogens dropped with index remapping;
// bond type 4 reads as aromatic
LigandModel parse_mol(std::istream& in);
LigandModel parse_mol_file(const std::string& path);

// all contiguous windows whose one-letter codes equal the key (0-based
// start indices)
std::vector<int> locate_word(const std::string& word_key, const ChainModel& chain);

Point centroid(const std::vector<Point>& points);

double euclidean(const Point& a, const Point& b);

struct PairDistance {
  std::string word_key;
  std::string fragment_id;
  double distance = 0.0;
  std::string source;  // "rule" | "random"
};

// Minimum centroid distance over all word occurrences (across chains) and
// all fragment embeddings; nullopt when either side has no occurrence.
std::optional<double> pair_distance(const std::string& word_key,
                                    const std::vector<ChainModel>& chains,
                                    const chem::Molecule& fragment_pattern,
                                    const LigandModel& ligand);

struct ComplexModel {
  std::string complex_id;
  std::vector<ChainModel> chains;
  LigandModel ligand;
};

// uniform draws (with replacement) from (word, fragment) pairs restricted to
// co-occurrence within the same complex
struct ControlPair {
  size_t complex_index = 0;
  std::string word_key;
  std::string fragment_id;
};
std::vector<ControlPair> random_control(
    const std::vector<ComplexModel>& complexes, const std::vector<std::string>& word_pool,
    const std::map<std::string, chem::Molecule>& fragment_pool, size_t n, uint64_t seed);

struct MannWhitneyResult {
  double u_a = 0.0;
  double u_b = 0.0;
  double p_two_sided = 1.0;
  double p_less = 1.0;   // one-sided: A stochastically smaller
  bool exact = false;
};

// Midrank ties; exact enumeration when min(n_a, n_b) < 8 (and the subset
// count is tractable), normal approximation with continuity correction
// otherwise.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace pwrules::structval
