#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace testsupport {

using pwrules::Rng;
using pwrules::chem::Atom;
using pwrules::chem::Bond;
using pwrules::chem::BondOrder;
using pwrules::chem::Molecule;

namespace {

bool atoms_match(const Atom& p, const Atom& t) {
  if (p.wildcard) return true;
  return p.element == t.element && p.aromatic == t.aromatic;
}

void recurse(const Molecule& pattern, const Molecule& target, std::vector<int>& assign,
             std::vector<bool>& used, size_t depth, std::set<std::vector<int>>& out) {
  if (depth == pattern.atoms.size()) {
    std::vector<int> s(assign);
    std::sort(s.begin(), s.end());
    out.insert(std::move(s));
    return;
  }
  for (int t = 0; t < target.atom_count(); ++t) {
    if (used[t]) continue;
    if (!atoms_match(pattern.atoms[depth], target.atoms[t])) continue;
    bool ok = true;
    for (int b : pattern.incident_bonds(static_cast<int>(depth))) {
      int pn = pattern.other_end(b, static_cast<int>(depth));
      if (pn >= static_cast<int>(depth)) continue;  // not assigned yet
      int tb = target.bond_between(t, assign[pn]);
      if (tb < 0 || target.bonds[tb].order != pattern.bonds[b].order) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    assign[depth] = t;
    used[t] = true;
    recurse(pattern, target, assign, used, depth + 1, out);
    used[t] = false;
    assign[depth] = -1;
  }
}

}  // namespace

std::set<std::vector<int>> brute_force_substructure_sets(const Molecule& pattern,
                                                         const Molecule& target) {
  std::set<std::vector<int>> out;
  if (pattern.atom_count() > target.atom_count()) return out;
  std::vector<int> assign(pattern.atoms.size(), -1);
  std::vector<bool> used(target.atoms.size(), false);
  recurse(pattern, target, assign, used, 0, out);
  return out;
}

Molecule random_molecule(Rng& rng, int max_heavy) {
  const char* elements[] = {"C", "C", "C", "N", "O", "S"};
  int n = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_heavy)));
  Molecule m;
  std::vector<int> capacity(n);
  for (int i = 0; i < n; ++i) {
    Atom a;
    a.element = elements[rng.next_below(6)];
    m.atoms.push_back(a);
    capacity[i] = a.element == "C" ? 4 : (a.element == "N" ? 3 : 2);
  }
  // random spanning tree keeps it connected; truncate when no parent has
  // free valence left
  for (int i = 1; i < n; ++i) {
    std::vector<int> candidates;
    for (int j = 0; j < i; ++j)
      if (capacity[j] >= 1) candidates.push_back(j);
    if (candidates.empty()) {
      n = i;
      m.atoms.resize(n);
      capacity.resize(n);
      break;
    }
    int j = candidates[rng.next_below(candidates.size())];
    BondOrder o = BondOrder::Single;
    if (capacity[i] >= 2 && capacity[j] >= 2 && rng.next_double() < 0.15) o = BondOrder::Double;
    m.bonds.push_back({j, i, o});
    int v = o == BondOrder::Double ? 2 : 1;
    capacity[i] -= v;
    capacity[j] -= v;
  }
  // a few extra ring-forming bonds
  int extra = static_cast<int>(rng.next_below(3));
  for (int e = 0; e < extra && n > 3; ++e) {
    int a = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
    int b = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
    if (a == b || capacity[a] < 1 || capacity[b] < 1) continue;
    bool dup = false;
    for (const Bond& bd : m.bonds)
      if ((bd.a == a && bd.b == b) || (bd.a == b && bd.b == a)) dup = true;
    if (dup) continue;
    m.bonds.push_back({a, b, BondOrder::Single});
    --capacity[a];
    --capacity[b];
  }
  for (int i = 0; i < n; ++i) m.atoms[i].h_count = std::max(0, capacity[i]);
  m.finalize();
  return m;
}

ExactMwu exact_mann_whitney(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  const size_t n = all.size(), na = a.size();
  // midranks over the pooled sample
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return all[x] < all[y]; });
  std::vector<double> rank(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && all[idx[j]] == all[idx[i]]) ++j;
    double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) rank[idx[k]] = mid;
    i = j;
  }
  auto u_of = [&](const std::vector<size_t>& members) {
    double rsum = 0.0;
    for (size_t i : members) rsum += rank[i];
    return rsum - static_cast<double>(na) * (static_cast<double>(na) + 1.0) / 2.0;
  };
  std::vector<size_t> obs(na);
  for (size_t i = 0; i < na; ++i) obs[i] = i;
  const double u_obs = u_of(obs);

  // enumerate all C(n, na) subsets as the A-labeling
  size_t count = 0, le = 0, ge = 0;
  std::vector<size_t> comb(na);
  for (size_t i = 0; i < na; ++i) comb[i] = i;
  bool more = true;
  while (more) {
    double u = u_of(comb);
    ++count;
    if (u <= u_obs + 1e-12) ++le;
    if (u >= u_obs - 1e-12) ++ge;
    more = false;
    for (size_t i = na; i-- > 0;) {
      if (comb[i] != i + n - na) {
        ++comb[i];
        for (size_t j = i + 1; j < na; ++j) comb[j] = comb[j - 1] + 1;
        more = true;
        break;
      }
    }
  }
  ExactMwu r;
  r.u_a = u_obs;
  r.p_less = static_cast<double>(le) / static_cast<double>(count);
  double p_ge = static_cast<double>(ge) / static_cast<double>(count);
  r.p_two_sided = std::min(1.0, 2.0 * std::min(r.p_less, p_ge));
  return r;
}

}  // namespace testsupport
