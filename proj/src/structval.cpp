#include "pwrules/structval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include "pwrules/errors.hpp"
#include "pwrules/util.hpp"

namespace pwrules::structval {

namespace {

char three_to_one(const std::string& res) {
  static const std::map<std::string, char> table{
      {"ALA", 'A'}, {"ARG", 'R'}, {"ASN", 'N'}, {"ASP", 'D'}, {"CYS", 'C'},
      {"GLN", 'Q'}, {"GLU", 'E'}, {"GLY", 'G'}, {"HIS", 'H'}, {"ILE", 'I'},
      {"LEU", 'L'}, {"LYS", 'K'}, {"MET", 'M'}, {"PHE", 'F'}, {"PRO", 'P'},
      {"SER", 'S'}, {"THR", 'T'}, {"TRP", 'W'}, {"TYR", 'Y'}, {"VAL", 'V'}};
  auto it = table.find(res);
  return it == table.end() ? 'X' : it->second;
}

double parse_coord(const std::string& line, size_t start, size_t len, size_t lineno) {
  if (line.size() < start + len)
    throw Error(ErrorKind::Parse, "short ATOM record at line " + std::to_string(lineno));
  std::string field = strip(line.substr(start, len));
  try {
    size_t used = 0;
    double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse,
                "bad coordinate '" + field + "' at line " + std::to_string(lineno));
  }
}

}  // namespace

std::string ChainModel::sequence() const {
  std::string s;
  s.reserve(residues.size());
  for (const Residue& r : residues) s += r.code;
  return s;
}

std::vector<ChainModel> parse_pdb(std::istream& in) {
  std::vector<ChainModel> chains;
  std::map<char, size_t> chain_index;
  std::string line;
  size_t lineno = 0;
  bool past_first_model = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("ENDMDL", 0) == 0) {
      past_first_model = true;
      continue;
    }
    if (past_first_model) continue;  // first model only
    if (line.rfind("ATOM", 0) != 0) continue;
    if (line.size() < 54)
      throw Error(ErrorKind::Parse, "short ATOM record at line " + std::to_string(lineno));
    std::string atom_name = strip(line.substr(12, 4));
    if (atom_name != "CA") continue;
    char altloc = line[16];
    if (altloc != ' ' && altloc != 'A') continue;
    std::string resname = strip(line.substr(17, 3));
    char chain_id = line[21];
    std::string resseq = strip(line.substr(22, 4));
    char icode = line.size() > 26 ? line[26] : ' ';
    int resnum = 0;
    try {
      resnum = std::stoi(resseq);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse,
                  "bad residue number '" + resseq + "' at line " + std::to_string(lineno));
    }
    Residue r;
    r.number = resnum;
    r.insertion_code = icode;
    r.code = three_to_one(resname);
    r.ca = {parse_coord(line, 30, 8, lineno), parse_coord(line, 38, 8, lineno),
            parse_coord(line, 46, 8, lineno)};

    auto it = chain_index.find(chain_id);
    if (it == chain_index.end()) {
      chain_index[chain_id] = chains.size();
      ChainModel c;
      c.chain_id = chain_id;
      chains.push_back(c);
      it = chain_index.find(chain_id);
    }
    ChainModel& chain = chains[it->second];
    // duplicate CA for one residue identity (e.g. second altloc 'A' copy): keep first
    if (!chain.residues.empty()) {
      const Residue& last = chain.residues.back();
      if (last.number == r.number && last.insertion_code == r.insertion_code) continue;
    }
    chain.residues.push_back(r);
  }
  return chains;
}

std::vector<ChainModel> parse_pdb_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return parse_pdb(in);
}

LigandModel parse_mol(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < 4) throw Error(ErrorKind::Parse, "mol file too short");

  const std::string& counts = lines[3];
  if (counts.size() < 6) throw Error(ErrorKind::Parse, "bad counts line");
  int n_atoms = 0, n_bonds = 0;
  try {
    n_atoms = std::stoi(strip(counts.substr(0, 3)));
    n_bonds = std::stoi(strip(counts.substr(3, 3)));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, "bad counts line '" + counts + "'");
  }
  if (lines.size() < 4 + static_cast<size_t>(n_atoms) + static_cast<size_t>(n_bonds))
    throw Error(ErrorKind::Parse, "atom/bond block shorter than counts line");

  struct RawAtom {
    Point xyz;
    std::string element;
    int charge = 0;
  };
  std::vector<RawAtom> raw(n_atoms);
  for (int i = 0; i < n_atoms; ++i) {
    const std::string& al = lines[4 + i];
    if (al.size() < 34) throw Error(ErrorKind::Parse, "short atom line " + std::to_string(5 + i));
    RawAtom a;
    try {
      a.xyz = {std::stod(strip(al.substr(0, 10))), std::stod(strip(al.substr(10, 10))),
               std::stod(strip(al.substr(20, 10)))};
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, "bad atom coordinates at line " + std::to_string(5 + i));
    }
    a.element = strip(al.substr(31, 3));
    raw[i] = a;
  }

  struct RawBond {
    int a = 0, b = 0, type = 1;
  };
  std::vector<RawBond> rbonds(n_bonds);
  for (int i = 0; i < n_bonds; ++i) {
    const std::string& bl = lines[4 + n_atoms + i];
    if (bl.size() < 9)
      throw Error(ErrorKind::Parse, "short bond line " + std::to_string(5 + n_atoms + i));
    try {
      rbonds[i].a = std::stoi(strip(bl.substr(0, 3))) - 1;
      rbonds[i].b = std::stoi(strip(bl.substr(3, 3))) - 1;
      rbonds[i].type = std::stoi(strip(bl.substr(6, 3)));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, "bad bond line " + std::to_string(5 + n_atoms + i));
    }
    if (rbonds[i].a < 0 || rbonds[i].a >= n_atoms || rbonds[i].b < 0 || rbonds[i].b >= n_atoms)
      throw Error(ErrorKind::Parse, "bond index out of range at line " +
                                        std::to_string(5 + n_atoms + i));
  }

  // M  CHG property lines override charges
  for (size_t li = 4 + n_atoms + n_bonds; li < lines.size(); ++li) {
    const std::string& pl = lines[li];
    if (pl.rfind("M  CHG", 0) != 0) continue;
    std::istringstream ss(pl.substr(6));
    int count = 0;
    ss >> count;
    for (int k = 0; k < count; ++k) {
      int idx = 0, chg = 0;
      ss >> idx >> chg;
      if (idx >= 1 && idx <= n_atoms) raw[idx - 1].charge = chg;
    }
  }

  // drop explicit hydrogens, remap indices, credit removed H to neighbors
  std::vector<int> remap(n_atoms, -1);
  LigandModel lig;
  for (int i = 0; i < n_atoms; ++i) {
    if (raw[i].element == "H") continue;
    remap[i] = static_cast<int>(lig.mol.atoms.size());
    chem::Atom a;
    a.element = raw[i].element;
    a.charge = raw[i].charge;
    a.wildcard = raw[i].element == "*";
    lig.mol.atoms.push_back(a);
    lig.coords.push_back(raw[i].xyz);
  }
  std::vector<int> explicit_h(lig.mol.atoms.size(), 0);
  for (const RawBond& b : rbonds) {
    bool ha = raw[b.a].element == "H", hb = raw[b.b].element == "H";
    if (ha && hb) continue;
    if (ha || hb) {
      int heavy = ha ? b.b : b.a;
      if (remap[heavy] >= 0) ++explicit_h[remap[heavy]];
      continue;
    }
    chem::Bond bond;
    bond.a = remap[b.a];
    bond.b = remap[b.b];
    switch (b.type) {
      case 1: bond.order = chem::BondOrder::Single; break;
      case 2: bond.order = chem::BondOrder::Double; break;
      case 3: bond.order = chem::BondOrder::Triple; break;
      case 4:
        bond.order = chem::BondOrder::Aromatic;
        lig.mol.atoms[bond.a].aromatic = true;
        lig.mol.atoms[bond.b].aromatic = true;
        break;
      default:
        throw Error(ErrorKind::Parse, "unsupported bond type " + std::to_string(b.type));
    }
    lig.mol.bonds.push_back(bond);
  }
  lig.mol.finalize();

  // hydrogen counts: explicit H neighbors plus the usual implicit fill
  for (int i = 0; i < lig.mol.atom_count(); ++i) {
    chem::Atom& a = lig.mol.atoms[i];
    if (a.wildcard) continue;
    int sum = 0;
    for (int bi : lig.mol.incident_bonds(i))
      sum += lig.mol.bonds[bi].order == chem::BondOrder::Double   ? 2
             : lig.mol.bonds[bi].order == chem::BondOrder::Triple ? 3
                                                                  : 1;
    if (a.aromatic && (a.element == "C" || a.element == "B" || a.element == "N" || a.element == "P"))
      sum += 1;
    int implicit = 0;
    double mass = chem::atomic_mass(a.element);
    if (mass > 0.0) {
      static const std::map<std::string, std::vector<int>> valences{
          {"B", {3}},  {"C", {4}},      {"N", {3, 5}},  {"O", {2}},      {"P", {3, 5}},
          {"S", {2, 4, 6}}, {"F", {1}}, {"Cl", {1}},    {"Br", {1}},     {"I", {1}}};
      auto it = valences.find(a.element);
      if (it != valences.end()) {
        for (int v : it->second) {
          if (sum + explicit_h[i] <= v) {
            implicit = v - sum - explicit_h[i];
            break;
          }
        }
      }
    }
    a.h_count = explicit_h[i] + implicit;
  }
  return lig;
}

LigandModel parse_mol_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return parse_mol(in);
}

std::vector<int> locate_word(const std::string& word_key, const ChainModel& chain) {
  std::vector<int> out;
  if (word_key.empty() || chain.residues.empty()) return out;
  std::string seq = chain.sequence();
  if (word_key.size() > seq.size()) return out;
  for (size_t i = 0; i + word_key.size() <= seq.size(); ++i)
    if (seq.compare(i, word_key.size(), word_key) == 0) out.push_back(static_cast<int>(i));
  return out;
}

Point centroid(const std::vector<Point>& points) {
  if (points.empty()) throw Error(ErrorKind::EmptySet, "centroid of empty point set");
  Point c{0.0, 0.0, 0.0};
  for (const Point& p : points)
    for (int d = 0; d < 3; ++d) c[d] += p[d];
  for (int d = 0; d < 3; ++d) c[d] /= static_cast<double>(points.size());
  return c;
}

double euclidean(const Point& a, const Point& b) {
  double s = 0.0;
  for (int d = 0; d < 3; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

std::optional<double> pair_distance(const std::string& word_key,
                                    const std::vector<ChainModel>& chains,
                                    const chem::Molecule& fragment_pattern,
                                    const LigandModel& ligand) {
  // word occurrence centroids across all chains
  std::vector<Point> word_centroids;
  for (const ChainModel& chain : chains) {
    for (int start : locate_word(word_key, chain)) {
      std::vector<Point> pts;
      for (size_t k = 0; k < word_key.size(); ++k)
        pts.push_back(chain.residues[start + k].ca);
      word_centroids.push_back(centroid(pts));
    }
  }
  if (word_centroids.empty()) return std::nullopt;

  std::vector<chem::AtomMapping> hits = chem::find_substructure(fragment_pattern, ligand.mol);
  if (hits.empty()) return std::nullopt;

  double best = std::numeric_limits<double>::infinity();
  for (const chem::AtomMapping& hit : hits) {
    std::vector<Point> pts;
    for (int t : hit.pairs) pts.push_back(ligand.coords[t]);
    Point fc = centroid(pts);
    for (const Point& wc : word_centroids) best = std::min(best, euclidean(wc, fc));
  }
  return best;
}

std::vector<ControlPair> random_control(
    const std::vector<ComplexModel>& complexes, const std::vector<std::string>& word_pool,
    const std::map<std::string, chem::Molecule>& fragment_pool, size_t n, uint64_t seed) {
  // candidate triples where word and fragment co-occur in one complex
  std::vector<ControlPair> candidates;
  for (size_t ci = 0; ci < complexes.size(); ++ci) {
    const ComplexModel& cm = complexes[ci];
    std::vector<std::string> present_words;
    for (const std::string& w : word_pool) {
      bool found = false;
      for (const ChainModel& chain : cm.chains)
        if (!locate_word(w, chain).empty()) found = true;
      if (found) present_words.push_back(w);
    }
    if (present_words.empty()) continue;
    for (const auto& [fid, pattern] : fragment_pool) {
      if (chem::find_substructure(pattern, cm.ligand.mol).empty()) continue;
      for (const std::string& w : present_words) candidates.push_back({ci, w, fid});
    }
  }
  std::vector<ControlPair> out;
  if (candidates.empty() || n == 0) return out;
  Rng rng(seed);
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(candidates[rng.next_below(candidates.size())]);
  return out;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

// binomial coefficient capped to avoid overflow in tractability checks
double choose_capped(size_t n, size_t k, double cap) {
  double c = 1.0;
  for (size_t i = 0; i < k; ++i) {
    c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
    if (c > cap) return cap + 1.0;
  }
  return c;
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::Value, "both samples must be non-empty");
  const size_t na = a.size(), nb = b.size(), n = na + nb;

  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return all[x] < all[y]; });
  std::vector<double> rank(n);
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && all[idx[j]] == all[idx[i]]) ++j;
    double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (size_t k = i; k < j; ++k) rank[idx[k]] = mid;
    i = j;
  }
  double rank_sum_a = 0.0;
  for (size_t i = 0; i < na; ++i) rank_sum_a += rank[i];
  MannWhitneyResult res;
  res.u_a = rank_sum_a - static_cast<double>(na) * (na + 1) / 2.0;
  res.u_b = static_cast<double>(na) * static_cast<double>(nb) - res.u_a;

  const bool small = std::min(na, nb) < 8;
  if (small && choose_capped(n, std::min(na, nb), 2e6) <= 2e6) {
    // exact enumeration over subsets taking the A labels
    res.exact = true;
    size_t count = 0, le = 0, ge = 0;
    std::vector<size_t> comb(na);
    for (size_t i = 0; i < na; ++i) comb[i] = i;
    bool more = true;
    while (more) {
      double rs = 0.0;
      for (size_t i : comb) rs += rank[i];
      double u = rs - static_cast<double>(na) * (na + 1) / 2.0;
      ++count;
      if (u <= res.u_a + 1e-12) ++le;
      if (u >= res.u_a - 1e-12) ++ge;
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
    res.p_less = static_cast<double>(le) / static_cast<double>(count);
    double p_ge = static_cast<double>(ge) / static_cast<double>(count);
    res.p_two_sided = std::min(1.0, 2.0 * std::min(res.p_less, p_ge));
    return res;
  }

  // normal approximation with tie correction and continuity correction
  double mu = static_cast<double>(na) * static_cast<double>(nb) / 2.0;
  double nn = static_cast<double>(n);
  double var = static_cast<double>(na) * nb / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (var <= 0.0) {
    // all values tied: U is exactly its mean
    res.p_two_sided = 1.0;
    res.p_less = res.u_a <= mu ? 1.0 : 0.0;
    return res;
  }
  double sd = std::sqrt(var);
  double diff = res.u_a - mu;
  double z_two = (std::abs(diff) - 0.5) / sd;
  if (z_two < 0.0) z_two = 0.0;
  res.p_two_sided = std::min(1.0, 2.0 * (1.0 - normal_cdf(z_two)));
  res.p_less = normal_cdf((diff + 0.5) / sd);
  return res;
}

}  // namespace pwrules::structval
