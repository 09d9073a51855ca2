#include "pwrules/fragmenter.hpp"

#include <algorithm>

#include "pwrules/errors.hpp"

namespace pwrules::frag {

using chem::Bond;
using chem::BondOrder;
using chem::Molecule;

bool DefaultCutRules::cuttable(const Molecule& m, int bond) const {
  const Bond& b = m.bonds[bond];
  if (b.order != BondOrder::Single) return false;
  if (m.bond_in_ring(bond)) return false;
  if (m.atoms[b.a].aromatic && m.atoms[b.b].aromatic) return false;
  if (m.atoms[b.a].wildcard || m.atoms[b.b].wildcard) return false;
  if (m.degree(b.a) < 2 || m.degree(b.b) < 2) return false;
  if (keep_amide_ && chem::is_amide_cn(m, bond)) return false;
  return true;
}

std::set<int> identify_cut_bonds(const Molecule& m, const CutRuleSet& rules) {
  std::set<int> cuts;
  for (int b = 0; b < m.bond_count(); ++b)
    if (rules.cuttable(m, b)) cuts.insert(b);
  return cuts;
}

namespace {

// connected components after deleting cut bonds
std::vector<std::vector<int>> blocks_of(const Molecule& m, const std::set<int>& cuts) {
  std::vector<int> comp(m.atom_count(), -1);
  std::vector<std::vector<int>> blocks;
  for (int start = 0; start < m.atom_count(); ++start) {
    if (comp[start] != -1) continue;
    int id = static_cast<int>(blocks.size());
    blocks.emplace_back();
    std::vector<int> stack{start};
    comp[start] = id;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      blocks[id].push_back(u);
      for (int bi : m.incident_bonds(u)) {
        if (cuts.count(bi)) continue;
        int v = m.other_end(bi, u);
        if (comp[v] == -1) {
          comp[v] = id;
          stack.push_back(v);
        }
      }
    }
    std::sort(blocks[id].begin(), blocks[id].end());
  }
  return blocks;
}

// induced fragment over an atom set with hydrogen-capped open valences
Molecule extract_fragment(const Molecule& m, const std::vector<int>& atom_set) {
  std::vector<int> remap(m.atom_count(), -1);
  Molecule f;
  for (size_t i = 0; i < atom_set.size(); ++i) {
    remap[atom_set[i]] = static_cast<int>(i);
    f.atoms.push_back(m.atoms[atom_set[i]]);
  }
  for (int a : atom_set) {
    for (int bi : m.incident_bonds(a)) {
      const Bond& b = m.bonds[bi];
      int other = m.other_end(bi, a);
      if (remap[other] == -1) {
        // severed bond: cap with hydrogen (cut bonds are always single)
        f.atoms[remap[a]].h_count += 1;
      } else if (b.a == a) {  // add each internal bond once
        f.bonds.push_back({remap[b.a], remap[b.b], b.order});
      }
    }
  }
  f.finalize();
  return f;
}

}  // namespace

std::vector<std::string> enumerate_fragments(const Molecule& m, const std::set<int>& cuts,
                                             const FragConfig& cfg) {
  std::vector<std::vector<int>> blocks = blocks_of(m, cuts);
  const int nb = static_cast<int>(blocks.size());

  // block adjacency over cut bonds
  std::vector<int> block_of(m.atom_count());
  for (int b = 0; b < nb; ++b)
    for (int a : blocks[b]) block_of[a] = b;
  std::vector<std::set<int>> adj(nb);
  for (int bi : cuts) {
    int x = block_of[m.bonds[bi].a], y = block_of[m.bonds[bi].b];
    if (x != y) {
      adj[x].insert(y);
      adj[y].insert(x);
    }
  }

  std::vector<int> heavy(nb, 0);
  for (int b = 0; b < nb; ++b)
    for (int a : blocks[b])
      if (!m.atoms[a].wildcard && m.atoms[a].element != "H") ++heavy[b];

  // enumerate each connected block subset of size <= max_blocks exactly once
  std::set<std::string> keys;
  size_t emitted = 0;

  std::function<void(std::vector<int>&, std::set<int>&, int)> extend =
      [&](std::vector<int>& subset, std::set<int>& banned, int heavy_sum) {
        if (++emitted > cfg.union_limit)
          throw Error(ErrorKind::CombinatorialLimit, "fragment union limit exceeded");
        if (heavy_sum <= cfg.max_heavy && heavy_sum >= 1) {
          std::vector<int> atom_set;
          for (int b : subset) atom_set.insert(atom_set.end(), blocks[b].begin(), blocks[b].end());
          std::sort(atom_set.begin(), atom_set.end());
          keys.insert(chem::canonical_key(extract_fragment(m, atom_set)));
        }
        if (static_cast<int>(subset.size()) >= cfg.max_blocks) return;
        std::vector<int> frontier;
        for (int b : subset)
          for (int n : adj[b])
            if (!banned.count(n) && std::find(subset.begin(), subset.end(), n) == subset.end() &&
                std::find(frontier.begin(), frontier.end(), n) == frontier.end())
              frontier.push_back(n);
        std::sort(frontier.begin(), frontier.end());
        std::set<int> local_banned = banned;
        for (int n : frontier) {
          subset.push_back(n);
          extend(subset, local_banned, heavy_sum + heavy[n]);
          subset.pop_back();
          local_banned.insert(n);
        }
      };

  for (int b = 0; b < nb; ++b) {
    std::vector<int> subset{b};
    std::set<int> banned;
    for (int x = 0; x <= b; ++x) banned.insert(x);
    extend(subset, banned, heavy[b]);
  }

  return std::vector<std::string>(keys.begin(), keys.end());
}

std::vector<std::string> fragment_keys(const Molecule& m, const FragConfig& cfg) {
  DefaultCutRules rules;
  return enumerate_fragments(m, identify_cut_bonds(m, rules), cfg);
}

const Fragment* FragmentLibrary::by_id(const std::string& fragment_id) const {
  auto it = id_index_.find(fragment_id);
  return it == id_index_.end() ? nullptr : &fragments[it->second];
}

const Fragment* FragmentLibrary::by_key(const std::string& key) const {
  auto it = key_index_.find(key);
  return it == key_index_.end() ? nullptr : &fragments[it->second];
}

void FragmentLibrary::rebuild_index() {
  id_index_.clear();
  key_index_.clear();
  for (size_t i = 0; i < fragments.size(); ++i) {
    id_index_[fragments[i].fragment_id] = i;
    key_index_[fragments[i].key] = i;
  }
}

FragmentLibrary build_library(const std::vector<Molecule>& corpus, const FilterConfig& filter,
                              const FragConfig& frag) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyDataset, "empty corpus");
  std::map<std::string, long> counts;
  for (const Molecule& m : corpus)
    for (const std::string& key : fragment_keys(m, frag)) ++counts[key];

  const long n = static_cast<long>(corpus.size());
  std::vector<Fragment> kept;
  for (const auto& [key, count] : counts) {
    double freq = static_cast<double>(count) / static_cast<double>(n);
    if (freq < filter.min_freq) continue;
    Molecule f = chem::parse_smiles(key);
    int heavy = f.heavy_atom_count();
    if (heavy < filter.min_heavy_atoms) continue;
    bool acyclic = true;
    for (int b = 0; b < f.bond_count(); ++b)
      if (f.bond_in_ring(b)) acyclic = false;
    if (acyclic) {
      int rot = chem::descriptors(f).rotatable_bonds;
      if (static_cast<double>(rot) > filter.flexibility_ratio * heavy) continue;
    }
    Fragment fr;
    fr.key = key;
    fr.heavy_atoms = heavy;
    fr.count = count;
    fr.freq = freq;
    kept.push_back(std::move(fr));
  }
  if (kept.empty()) throw Error(ErrorKind::EmptyLibrary, "no fragments survive filtering");

  std::sort(kept.begin(), kept.end(), [](const Fragment& a, const Fragment& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.key < b.key;
  });
  for (size_t i = 0; i < kept.size(); ++i)
    kept[i].fragment_id = "frag_" + std::to_string(i + 1);

  FragmentLibrary lib;
  lib.fragments = std::move(kept);
  lib.corpus_size = n;
  lib.filter_config = filter;
  lib.rebuild_index();
  return lib;
}

double coverage(const FragmentLibrary& lib, const std::vector<Molecule>& probe) {
  if (lib.fragments.empty()) throw Error(ErrorKind::EmptyLibrary, "empty library");
  if (probe.empty()) throw Error(ErrorKind::EmptyProbe, "empty probe set");
  std::vector<Molecule> patterns;
  patterns.reserve(lib.fragments.size());
  for (const Fragment& f : lib.fragments) patterns.push_back(chem::parse_smiles(f.key));
  long hit = 0;
  for (const Molecule& m : probe) {
    for (const Molecule& p : patterns) {
      if (chem::has_substructure(p, m)) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(probe.size());
}

}  // namespace pwrules::frag
