#include "pwrules/chemgraph.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "pwrules/errors.hpp"

namespace pwrules::chem {

namespace {

struct ElementInfo {
  const char* symbol;
  double mass;
  std::array<int, 3> valences;  // ascending, 0 = unused
  bool organic_subset;
  bool aromatic_ok;
};

const ElementInfo kElements[] = {
    {"B", 10.811, {3, 0, 0}, true, true},
    {"C", 12.011, {4, 0, 0}, true, true},
    {"N", 14.007, {3, 5, 0}, true, true},
    {"O", 15.999, {2, 0, 0}, true, true},
    {"P", 30.974, {3, 5, 0}, true, true},
    {"S", 32.06, {2, 4, 6}, true, true},
    {"F", 18.998, {1, 0, 0}, true, false},
    {"Cl", 35.45, {1, 0, 0}, true, false},
    {"Br", 79.904, {1, 0, 0}, true, false},
    {"I", 126.904, {1, 0, 0}, true, false},
    {"H", 1.008, {1, 0, 0}, false, false},
};

const ElementInfo* element_info(const std::string& sym) {
  for (const auto& e : kElements)
    if (sym == e.symbol) return &e;
  return nullptr;
}

// integer valence contribution; aromatic atoms get +1 added separately
int order_value(BondOrder o) {
  switch (o) {
    case BondOrder::Single: return 1;
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    case BondOrder::Aromatic: return 1;
  }
  return 1;
}

int bond_order_sum(const Molecule& m, int atom) {
  int s = 0;
  for (int b : m.incident_bonds(atom)) s += order_value(m.bonds[b].order);
  // aromatic C/B/N/P carry one Kekulé double bond; aromatic O/S contribute a
  // lone pair instead
  const std::string& el = m.atoms[atom].element;
  if (m.atoms[atom].aromatic && (el == "C" || el == "B" || el == "N" || el == "P")) s += 1;
  return s;
}

}  // namespace

void Molecule::finalize() {
  const int n = atom_count();
  adj_.assign(n, {});
  for (int i = 0; i < bond_count(); ++i) {
    const Bond& b = bonds[i];
    if (b.a < 0 || b.a >= n || b.b < 0 || b.b >= n || b.a == b.b)
      throw Error(ErrorKind::Value, "bond endpoints invalid");
    for (int e : adj_[b.a])
      if (other_end(e, b.a) == b.b) throw Error(ErrorKind::Value, "duplicate bond");
    if (b.order == BondOrder::Aromatic && (!atoms[b.a].aromatic || !atoms[b.b].aromatic))
      throw Error(ErrorKind::Value, "aromatic bond between non-aromatic atoms");
    adj_[b.a].push_back(i);
    adj_[b.b].push_back(i);
  }
  // ring bonds = non-bridges (iterative DFS, Tarjan low-links)
  ring_bond_.assign(bonds.size(), true);
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;
  for (int root = 0; root < n; ++root) {
    if (disc[root] != -1) continue;
    // stack of (atom, incoming bond, next neighbor slot)
    std::vector<std::array<int, 3>> stack{{root, -1, 0}};
    disc[root] = low[root] = timer++;
    while (!stack.empty()) {
      auto& top = stack.back();
      int u = top[0];
      if (top[2] < static_cast<int>(adj_[u].size())) {
        int bi = adj_[u][top[2]++];
        if (bi == top[1]) continue;
        int v = other_end(bi, u);
        if (disc[v] == -1) {
          disc[v] = low[v] = timer++;
          stack.push_back({v, bi, 0});
        } else {
          low[u] = std::min(low[u], disc[v]);
        }
      } else {
        stack.pop_back();
        if (!stack.empty()) {
          int parent = stack.back()[0];
          low[parent] = std::min(low[parent], low[u]);
          if (low[u] > disc[parent]) ring_bond_[top[1]] = false;  // bridge
        }
      }
    }
  }
}

int Molecule::heavy_atom_count() const {
  int c = 0;
  for (const auto& a : atoms)
    if (!a.wildcard && a.element != "H") ++c;
  return c;
}

int Molecule::bond_between(int a, int b) const {
  for (int e : adj_[a])
    if (other_end(e, a) == b) return e;
  return -1;
}

bool Molecule::connected() const {
  if (atoms.empty()) return true;
  std::vector<bool> seen(atoms.size(), false);
  std::vector<int> stack{0};
  seen[0] = true;
  size_t count = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int b : adj_[u]) {
      int v = other_end(b, u);
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == atoms.size();
}

// ---------------------------------------------------------------------------
// SMILES parsing
// ---------------------------------------------------------------------------

namespace {

struct Parser {
  std::string_view text;
  size_t pos = 0;
  Molecule mol;
  int prev_atom = -1;
  BondOrder pending_order = BondOrder::Single;
  bool pending_explicit = false;
  std::vector<int> branch_stack;
  // ring closure number -> (atom, explicit order or 0)
  std::map<int, std::pair<int, int>> open_rings;

  [[noreturn]] void fail(const std::string& msg) {
    throw Error(ErrorKind::Syntax, msg + " at position " + std::to_string(pos) + " in '" +
                                       std::string(text) + "'");
  }

  char peek() const { return pos < text.size() ? text[pos] : '\0'; }
  char take() { return text[pos++]; }
  bool done() const { return pos >= text.size(); }

  void add_bond(int a, int b, BondOrder order) {
    mol.bonds.push_back({a, b, order});
  }

  BondOrder resolve_order(int a, int b) const {
    if (pending_explicit) return pending_order;
    if (mol.atoms[a].aromatic && mol.atoms[b].aromatic) return BondOrder::Aromatic;
    return BondOrder::Single;
  }

  void connect(int atom) {
    if (prev_atom >= 0) {
      BondOrder o = resolve_order(prev_atom, atom);
      if (o == BondOrder::Aromatic && (!mol.atoms[prev_atom].aromatic || !mol.atoms[atom].aromatic))
        fail("aromatic bond requires aromatic atoms");
      add_bond(prev_atom, atom, o);
    }
    prev_atom = atom;
    pending_explicit = false;
    pending_order = BondOrder::Single;
  }

  void ring_closure(int num) {
    int explicit_order = pending_explicit ? static_cast<int>(pending_order) : 0;
    pending_explicit = false;
    pending_order = BondOrder::Single;
    if (prev_atom < 0) fail("ring closure before any atom");
    auto it = open_rings.find(num);
    if (it == open_rings.end()) {
      open_rings[num] = {prev_atom, explicit_order};
      return;
    }
    auto [other, other_order] = it->second;
    open_rings.erase(it);
    if (other == prev_atom) fail("ring closure to self");
    int order = 0;
    if (explicit_order && other_order && explicit_order != other_order)
      fail("conflicting ring bond orders");
    order = explicit_order ? explicit_order : other_order;
    BondOrder o;
    if (order == 0) {
      o = (mol.atoms[other].aromatic && mol.atoms[prev_atom].aromatic) ? BondOrder::Aromatic
                                                                       : BondOrder::Single;
    } else {
      o = static_cast<BondOrder>(order);
    }
    if (o == BondOrder::Aromatic && (!mol.atoms[other].aromatic || !mol.atoms[prev_atom].aromatic))
      fail("aromatic ring bond between non-aromatic atoms");
    add_bond(other, prev_atom, o);
  }

  int add_atom(std::string element, bool aromatic, int charge, int h_count, bool h_explicit,
               bool wildcard) {
    Atom a;
    a.element = std::move(element);
    a.aromatic = aromatic;
    a.charge = charge;
    a.h_count = h_count;
    a.wildcard = wildcard;
    mol.atoms.push_back(std::move(a));
    int idx = static_cast<int>(mol.atoms.size()) - 1;
    if (!h_explicit) implicit_pending.push_back(idx);
    connect(idx);
    return idx;
  }

  std::vector<int> implicit_pending;  // bare atoms needing implicit H after all bonds known

  void parse_bracket() {
    size_t start = pos;
    ++pos;  // '['
    // isotope (ignored)
    bool saw_isotope = false;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      take();
      saw_isotope = true;
    }
    if (saw_isotope) mol.warnings.push_back("isotope label ignored");
    bool aromatic = false;
    std::string sym;
    char c = peek();
    if (c == '*') {
      take();
      sym = "*";
    } else if (std::islower(static_cast<unsigned char>(c))) {
      aromatic = true;
      sym += static_cast<char>(std::toupper(static_cast<unsigned char>(take())));
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      sym += take();
      if (std::islower(static_cast<unsigned char>(peek()))) {
        std::string two = sym + peek();
        if (element_info(two) || two == "Se" || two == "As") {
          sym = two;
          take();
        }
      }
    } else {
      fail("expected element symbol in bracket");
    }
    if (sym != "*" && sym != "H" && !element_info(sym)) fail("unsupported element '" + sym + "'");
    if (aromatic) {
      const ElementInfo* ei = element_info(sym);
      if (!ei || !ei->aromatic_ok) fail("element cannot be aromatic");
    }
    // chirality ignored
    while (peek() == '@') {
      take();
      if (!mol.warnings.empty() && mol.warnings.back() == "stereochemistry ignored") {
      } else {
        mol.warnings.push_back("stereochemistry ignored");
      }
    }
    if (peek() == 'T' || peek() == 'A') {
      // @TH1 / @AL1 style tags: skip alnum run (already warned above)
      while (std::isalnum(static_cast<unsigned char>(peek()))) take();
    }
    int h_count = 0;
    if (peek() == 'H') {
      take();
      h_count = 1;
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        h_count = 0;
        while (std::isdigit(static_cast<unsigned char>(peek()))) h_count = h_count * 10 + (take() - '0');
      }
    }
    int charge = 0;
    if (peek() == '+' || peek() == '-') {
      int sign = take() == '+' ? 1 : -1;
      int magnitude = 1;
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        magnitude = 0;
        while (std::isdigit(static_cast<unsigned char>(peek()))) magnitude = magnitude * 10 + (take() - '0');
      } else {
        while (peek() == (sign > 0 ? '+' : '-')) {
          take();
          ++magnitude;
        }
      }
      charge = sign * magnitude;
    }
    if (peek() != ']') fail("unbalanced bracket opened at " + std::to_string(start));
    take();
    if (sym == "H") {
      // [H] as a standalone atom: represent as explicit hydrogen atom
      add_atom("H", false, charge, h_count, true, false);
      return;
    }
    add_atom(sym, aromatic, charge, h_count, true, sym == "*");
  }

  void parse_atom() {
    char c = peek();
    if (c == '[') {
      parse_bracket();
      return;
    }
    if (c == '*') {
      take();
      add_atom("*", false, 0, 0, true, true);
      return;
    }
    bool aromatic = std::islower(static_cast<unsigned char>(c)) != 0;
    std::string sym(1, static_cast<char>(std::toupper(static_cast<unsigned char>(take()))));
    if (!aromatic && (sym == "C" || sym == "B")) {
      // two-letter organics: Cl, Br
      if (sym == "C" && peek() == 'l') {
        sym = "Cl";
        take();
      } else if (sym == "B" && peek() == 'r') {
        sym = "Br";
        take();
      }
    }
    const ElementInfo* ei = element_info(sym);
    if (!ei || !ei->organic_subset) fail("unsupported bare element '" + sym + "'");
    if (aromatic && !ei->aromatic_ok) fail("element cannot be aromatic");
    add_atom(sym, aromatic, 0, 0, false, false);
  }

  void run() {
    while (!done()) {
      char c = peek();
      if (c == '-') {
        take();
        pending_order = BondOrder::Single;
        pending_explicit = true;
      } else if (c == '=') {
        take();
        pending_order = BondOrder::Double;
        pending_explicit = true;
      } else if (c == '#') {
        take();
        pending_order = BondOrder::Triple;
        pending_explicit = true;
      } else if (c == ':') {
        take();
        pending_order = BondOrder::Aromatic;
        pending_explicit = true;
      } else if (c == '/' || c == '\\') {
        take();
        mol.warnings.push_back("stereochemistry ignored");
        pending_order = BondOrder::Single;
        pending_explicit = true;
      } else if (c == '(') {
        take();
        if (prev_atom < 0) fail("branch before any atom");
        branch_stack.push_back(prev_atom);
      } else if (c == ')') {
        take();
        if (branch_stack.empty()) fail("unbalanced ')'");
        prev_atom = branch_stack.back();
        branch_stack.pop_back();
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        ring_closure(take() - '0');
      } else if (c == '%') {
        take();
        if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("bad %nn ring closure");
        int num = take() - '0';
        if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("bad %nn ring closure");
        num = num * 10 + (take() - '0');
        ring_closure(num);
      } else if (c == '.') {
        fail("unexpected component separator '.'");
      } else if (c == ' ' || c == '\t') {
        break;  // trailing title field
      } else {
        parse_atom();
      }
    }
    if (!branch_stack.empty()) fail("unbalanced '('");
    if (!open_rings.empty())
      fail("unclosed ring bond " + std::to_string(open_rings.begin()->first));
    if (mol.atoms.empty()) fail("no atoms");
  }

  void assign_implicit_h() {
    for (int idx : implicit_pending) {
      Atom& a = mol.atoms[idx];
      const ElementInfo* ei = element_info(a.element);
      int sum = bond_order_sum(mol, idx);
      int h = -1;
      for (int v : ei->valences) {
        if (v == 0) break;
        if (sum <= v) {
          h = v - sum;
          break;
        }
      }
      if (h < 0)
        throw Error(ErrorKind::Valence, "atom " + a.element + " exceeds standard valence in '" +
                                            std::string(text) + "'");
      a.h_count = h;
    }
    // bracket atoms: sanity cap only (charges shift usable valence)
    for (int i = 0; i < mol.atom_count(); ++i) {
      const Atom& a = mol.atoms[i];
      if (a.wildcard || a.element == "H") continue;
      const ElementInfo* ei = element_info(a.element);
      int maxv = 0;
      for (int v : ei->valences) maxv = std::max(maxv, v);
      int total = bond_order_sum(mol, i) + a.h_count;
      if (total > maxv + std::abs(a.charge))
        throw Error(ErrorKind::Valence,
                    "atom " + a.element + " exceeds standard valence in '" + std::string(text) + "'");
    }
  }
};

Molecule parse_single(std::string_view text) {
  if (text.empty()) throw Error(ErrorKind::Syntax, "empty SMILES");
  Parser p;
  p.text = text;
  p.run();
  p.mol.source_text = std::string(text);
  p.mol.finalize();
  p.assign_implicit_h();
  if (!p.mol.connected())
    throw Error(ErrorKind::Syntax, "disconnected component in '" + std::string(text) + "'");
  return std::move(p.mol);
}

}  // namespace

Molecule parse_smiles(std::string_view text) {
  for (char c : text)
    if (c == '.')
      throw Error(ErrorKind::Syntax,
                  "multi-component input; use parse_components: '" + std::string(text) + "'");
  return parse_single(text);
}

std::vector<Molecule> parse_components(std::string_view text) {
  std::vector<Molecule> out;
  size_t start = 0;
  for (size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '.') {
      std::string_view part = text.substr(start, i - start);
      if (!part.empty()) out.push_back(parse_single(part));
      start = i + 1;
    }
  }
  if (out.empty()) throw Error(ErrorKind::Syntax, "empty SMILES");
  return out;
}

// ---------------------------------------------------------------------------
// Canonicalization
// ---------------------------------------------------------------------------

namespace {

// initial isomorphism-invariant atom color
std::vector<std::string> initial_colors(const Molecule& m) {
  std::vector<std::string> colors(m.atom_count());
  for (int i = 0; i < m.atom_count(); ++i) {
    const Atom& a = m.atoms[i];
    colors[i] = (a.wildcard ? std::string("*") : a.element) + "|" + (a.aromatic ? "a" : "A") + "|" +
                std::to_string(a.charge) + "|" + std::to_string(m.degree(i)) + "|" +
                std::to_string(a.h_count);
  }
  return colors;
}

// iterative refinement: rank atoms by (rank, sorted neighbor (order, rank) list)
std::vector<int> refine(const Molecule& m, std::vector<int> rank) {
  const int n = m.atom_count();
  for (;;) {
    std::vector<std::pair<std::vector<int>, int>> sig(n);
    for (int i = 0; i < n; ++i) {
      std::vector<int> s;
      s.push_back(rank[i]);
      std::vector<std::pair<int, int>> nb;
      for (int b : m.incident_bonds(i))
        nb.emplace_back(static_cast<int>(m.bonds[b].order), rank[m.other_end(b, i)]);
      std::sort(nb.begin(), nb.end());
      for (auto& [o, r] : nb) {
        s.push_back(o);
        s.push_back(r);
      }
      sig[i] = {std::move(s), i};
    }
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int x, int y) { return sig[x].first < sig[y].first; });
    std::vector<int> new_rank(n);
    int r = 0;
    for (int i = 0; i < n; ++i) {
      if (i > 0 && sig[idx[i]].first != sig[idx[i - 1]].first) ++r;
      new_rank[idx[i]] = r;
    }
    if (new_rank == rank) return rank;
    rank = std::move(new_rank);
  }
}

std::vector<int> initial_ranks(const Molecule& m) {
  const int n = m.atom_count();
  std::vector<std::string> colors = initial_colors(m);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return colors[a] < colors[b]; });
  std::vector<int> rank(n);
  int r = 0;
  for (int i = 0; i < n; ++i) {
    if (i > 0 && colors[idx[i]] != colors[idx[i - 1]]) ++r;
    rank[idx[i]] = r;
  }
  return rank;
}

std::string atom_token(const Atom& a, int implied_h) {
  if (a.wildcard) return "*";
  std::string sym = a.element;
  if (a.aromatic)
    for (auto& c : sym) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  bool plain = a.charge == 0 && a.h_count == implied_h;
  if (plain) return sym;
  std::string t = "[" + sym;
  if (a.h_count == 1)
    t += "H";
  else if (a.h_count > 1)
    t += "H" + std::to_string(a.h_count);
  if (a.charge == 1)
    t += "+";
  else if (a.charge == -1)
    t += "-";
  else if (a.charge > 1)
    t += "+" + std::to_string(a.charge);
  else if (a.charge < -1)
    t += "-" + std::to_string(-a.charge);
  return t + "]";
}

// hydrogen count a bare (non-bracket) emission would imply for this atom
int implied_h_for_emission(const Molecule& m, int atom) {
  const Atom& a = m.atoms[atom];
  if (a.wildcard) return 0;
  const ElementInfo* ei = element_info(a.element);
  if (!ei || !ei->organic_subset) return -1;  // force bracket
  int sum = bond_order_sum(m, atom);
  for (int v : ei->valences) {
    if (v == 0) break;
    if (sum <= v) return v - sum;
  }
  return -1;
}

std::string bond_token(const Molecule& m, const Bond& b) {
  switch (b.order) {
    case BondOrder::Single:
      return (m.atoms[b.a].aromatic && m.atoms[b.b].aromatic) ? "-" : "";
    case BondOrder::Double: return "=";
    case BondOrder::Triple: return "#";
    case BondOrder::Aromatic: return "";
  }
  return "";
}

// Emits a SMILES string from a molecule given a discrete atom ranking.
std::string emit_smiles(const Molecule& m, const std::vector<int>& rank) {
  const int n = m.atom_count();
  int root = 0;
  for (int i = 0; i < n; ++i)
    if (rank[i] < rank[root]) root = i;

  // plan traversal: spanning tree + ring-closure (back) edges
  std::vector<bool> visited(n, false);
  std::vector<bool> bond_used(m.bond_count(), false);
  std::vector<std::vector<int>> closure_digits(n);
  std::vector<std::vector<int>> tree_children(n);  // bond indices in visit order
  std::map<int, int> digit_bond;
  int next_digit = 1;

  // planning pass: spanning-tree edges vs ring-closure digits
  {
    struct Frame {
      int atom;
      std::vector<int> nbrs;  // bond indices sorted by neighbor rank
      size_t next = 0;
    };
    auto sorted_bonds = [&](int u) {
      std::vector<int> bs = m.incident_bonds(u);
      std::sort(bs.begin(), bs.end(), [&](int x, int y) {
        return rank[m.other_end(x, u)] < rank[m.other_end(y, u)];
      });
      return bs;
    };
    std::vector<Frame> stack;
    visited[root] = true;
    stack.push_back({root, sorted_bonds(root)});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next >= f.nbrs.size()) {
        stack.pop_back();
        continue;
      }
      int bi = f.nbrs[f.next++];
      if (bond_used[bi]) continue;
      int v = m.other_end(bi, f.atom);
      bond_used[bi] = true;
      if (!visited[v]) {
        tree_children[f.atom].push_back(bi);
        visited[v] = true;
        stack.push_back({v, sorted_bonds(v)});
      } else {
        // ring closure; digit recorded at both endpoints
        int digit = next_digit++;
        closure_digits[f.atom].push_back(digit);
        closure_digits[v].push_back(digit);
        digit_bond[digit] = bi;
      }
    }
  }

  auto digit_str = [](int d) {
    return d < 10 ? std::to_string(d) : "%" + std::to_string(d);
  };

  std::string out;
  struct EmitFrame {
    int atom;
    int in_bond;  // tree bond into this atom, -1 at root
    size_t child = 0;
    bool opened_paren = false;
  };
  std::vector<EmitFrame> stack;
  stack.push_back({root, -1});
  while (!stack.empty()) {
    EmitFrame& f = stack.back();
    if (f.child == 0) {
      if (f.in_bond >= 0) out += bond_token(m, m.bonds[f.in_bond]);
      out += atom_token(m.atoms[f.atom], implied_h_for_emission(m, f.atom));
      for (int d : closure_digits[f.atom]) {
        const Bond& cb = m.bonds[digit_bond[d]];
        out += bond_token(m, cb);
        out += digit_str(d);
      }
    }
    if (f.child < tree_children[f.atom].size()) {
      int bi = tree_children[f.atom][f.child++];
      bool last = f.child == tree_children[f.atom].size();
      int v = m.other_end(bi, f.atom);
      if (!last) out += "(";
      stack.push_back({v, bi, 0, !last});
    } else {
      bool close = f.opened_paren;
      stack.pop_back();
      if (close) out += ")";
    }
  }
  return out;
}

void canonical_search(const Molecule& m, std::vector<int> rank, std::string& best, int depth) {
  rank = refine(m, rank);
  const int n = m.atom_count();
  // find first non-singleton cell by rank value
  std::vector<int> cell_size(n, 0);
  for (int i = 0; i < n; ++i) ++cell_size[rank[i]];
  int target_rank = -1;
  for (int r = 0; r < n; ++r) {
    if (cell_size[r] > 1) {
      target_rank = r;
      break;
    }
  }
  if (target_rank == -1) {
    std::string s = emit_smiles(m, rank);
    if (best.empty() || s < best) best = s;
    return;
  }
  if (depth > 24) {
    // symmetry blowup guard: fall back to first atom of the cell
    for (int i = 0; i < n; ++i) {
      if (rank[i] == target_rank) {
        std::vector<int> r2 = rank;
        for (int j = 0; j < n; ++j)
          if (r2[j] > target_rank || (r2[j] == target_rank && j != i)) ++r2[j];
        canonical_search(m, std::move(r2), best, depth + 1);
        break;
      }
    }
    return;
  }
  for (int i = 0; i < n; ++i) {
    if (rank[i] != target_rank) continue;
    std::vector<int> r2 = rank;
    // individualize atom i: pull it ahead of its cell
    for (int j = 0; j < n; ++j)
      if (r2[j] > target_rank || (r2[j] == target_rank && j != i)) ++r2[j];
    canonical_search(m, std::move(r2), best, depth + 1);
  }
}

}  // namespace

std::string canonical_key(const Molecule& m) {
  if (m.atoms.empty()) throw Error(ErrorKind::Value, "empty molecule");
  std::string best;
  canonical_search(m, initial_ranks(m), best, 0);
  return best;
}

// ---------------------------------------------------------------------------
// Substructure search
// ---------------------------------------------------------------------------

namespace {

bool atom_compatible(const Atom& p, const Atom& t) {
  if (p.wildcard) return true;
  return p.element == t.element && p.aromatic == t.aromatic;
}

struct Matcher {
  const Molecule& pattern;
  const Molecule& target;
  size_t max_hits;
  std::vector<int> order;        // pattern atom visit order (connected expansion)
  std::vector<int> assignment;   // pattern atom -> target atom (-1 unset)
  std::vector<bool> used;        // target atom used
  std::set<std::vector<int>> seen_sets;
  std::vector<std::pair<std::vector<int>, AtomMapping>> hits;

  Matcher(const Molecule& p, const Molecule& t, size_t mh)
      : pattern(p), target(t), max_hits(mh) {
    // visit order: BFS from atom 0 so each later atom has a matched neighbor
    int n = pattern.atom_count();
    std::vector<bool> inorder(n, false);
    order.push_back(0);
    inorder[0] = true;
    for (size_t qi = 0; qi < order.size(); ++qi) {
      int u = order[qi];
      for (int b : pattern.incident_bonds(u)) {
        int v = pattern.other_end(b, u);
        if (!inorder[v]) {
          inorder[v] = true;
          order.push_back(v);
        }
      }
    }
    assignment.assign(n, -1);
    used.assign(target.atom_count(), false);
  }

  bool feasible(int patom, int tatom) {
    if (!atom_compatible(pattern.atoms[patom], target.atoms[tatom])) return false;
    if (!pattern.atoms[patom].wildcard && pattern.degree(patom) > target.degree(tatom))
      return false;
    // every already-assigned pattern neighbor must map to a target neighbor
    // with identical bond order
    for (int b : pattern.incident_bonds(patom)) {
      int pn = pattern.other_end(b, patom);
      if (assignment[pn] < 0) continue;
      int tb = target.bond_between(tatom, assignment[pn]);
      if (tb < 0) return false;
      if (target.bonds[tb].order != pattern.bonds[b].order) return false;
    }
    return true;
  }

  void record() {
    std::vector<int> atom_set(assignment.begin(), assignment.end());
    std::sort(atom_set.begin(), atom_set.end());
    if (!seen_sets.insert(atom_set).second) return;
    if (seen_sets.size() > max_hits)
      throw Error(ErrorKind::HitLimit, "substructure hit limit exceeded");
    AtomMapping m;
    m.pairs = assignment;
    hits.emplace_back(std::move(atom_set), std::move(m));
  }

  void search(size_t depth) {
    if (depth == order.size()) {
      record();
      return;
    }
    int patom = order[depth];
    for (int tatom = 0; tatom < target.atom_count(); ++tatom) {
      if (used[tatom]) continue;
      if (!feasible(patom, tatom)) continue;
      assignment[patom] = tatom;
      used[tatom] = true;
      search(depth + 1);
      used[tatom] = false;
      assignment[patom] = -1;
    }
  }
};

}  // namespace

std::vector<AtomMapping> find_substructure(const Molecule& pattern, const Molecule& target,
                                           size_t max_hits) {
  if (pattern.atoms.empty()) throw Error(ErrorKind::Value, "empty pattern");
  if (pattern.atom_count() > target.atom_count()) return {};
  Matcher m(pattern, target, max_hits);
  m.search(0);
  std::sort(m.hits.begin(), m.hits.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<AtomMapping> out;
  out.reserve(m.hits.size());
  for (auto& [set, mapping] : m.hits) out.push_back(std::move(mapping));
  return out;
}

bool has_substructure(const Molecule& pattern, const Molecule& target) {
  if (pattern.atoms.empty() || pattern.atom_count() > target.atom_count()) return false;
  struct Probe : Matcher {
    using Matcher::Matcher;
    bool found = false;
    void search2(size_t depth) {
      if (found) return;
      if (depth == order.size()) {
        found = true;
        return;
      }
      int patom = order[depth];
      for (int tatom = 0; tatom < target.atom_count() && !found; ++tatom) {
        if (used[tatom] || !feasible(patom, tatom)) continue;
        assignment[patom] = tatom;
        used[tatom] = true;
        search2(depth + 1);
        used[tatom] = false;
        assignment[patom] = -1;
      }
    }
  };
  Probe p(pattern, target, 1);
  p.search2(0);
  return p.found;
}

// ---------------------------------------------------------------------------
// Descriptors
// ---------------------------------------------------------------------------

double atomic_mass(const std::string& element) {
  const ElementInfo* ei = element_info(element);
  return ei ? ei->mass : 0.0;
}

bool is_amide_cn(const Molecule& m, int bond) {
  const Bond& b = m.bonds[bond];
  if (b.order != BondOrder::Single) return false;
  auto check = [&](int c, int n) {
    if (m.atoms[c].element != "C" || m.atoms[n].element != "N") return false;
    for (int cb : m.incident_bonds(c)) {
      const Bond& ob = m.bonds[cb];
      if (ob.order == BondOrder::Double && m.atoms[m.other_end(cb, c)].element == "O") return true;
    }
    return false;
  };
  return check(b.a, b.b) || check(b.b, b.a);
}

DescriptorSet descriptors(const Molecule& m) {
  DescriptorSet d;
  for (int i = 0; i < m.atom_count(); ++i) {
    const Atom& a = m.atoms[i];
    if (a.wildcard) continue;
    d.mw += atomic_mass(a.element) + a.h_count * atomic_mass("H");
    bool no = a.element == "N" || a.element == "O";
    if (no && a.h_count >= 1) ++d.hbd;
    if (no) {
      // pyrrole-type aromatic N-H contributes its lone pair to the ring
      bool pyrrole_like = a.element == "N" && a.aromatic && a.h_count >= 1;
      if (!pyrrole_like) ++d.hba;
    }
  }
  for (int b = 0; b < m.bond_count(); ++b) {
    const Bond& bd = m.bonds[b];
    if (bd.order != BondOrder::Single || m.bond_in_ring(b)) continue;
    auto heavy_degree = [&](int atom) {
      int deg = 0;
      for (int ib : m.incident_bonds(atom))
        if (!m.atoms[m.other_end(ib, atom)].wildcard && m.atoms[m.other_end(ib, atom)].element != "H")
          ++deg;
      return deg;
    };
    if (m.atoms[bd.a].wildcard || m.atoms[bd.b].wildcard) continue;
    if (m.atoms[bd.a].element == "H" || m.atoms[bd.b].element == "H") continue;
    if (heavy_degree(bd.a) < 2 || heavy_degree(bd.b) < 2) continue;
    if (is_amide_cn(m, b)) continue;
    ++d.rotatable_bonds;
  }
  return d;
}

DescriptorSet descriptors(const Molecule& m,
                          const std::optional<std::pair<double, double>>& logp_tpsa) {
  DescriptorSet d = descriptors(m);
  if (logp_tpsa) {
    d.logp = logp_tpsa->first;
    d.tpsa = logp_tpsa->second;
  }
  return d;
}

bool rule_of_three(const DescriptorSet& d) {
  if (d.mw > 300.0) return false;
  if (d.hbd > 3) return false;
  if (d.hba > 3) return false;
  if (d.rotatable_bonds > 3) return false;
  if (d.logp && *d.logp > 3.0) return false;
  if (d.tpsa && *d.tpsa > 60.0) return false;
  return true;
}

}  // namespace pwrules::chem
