#include <algorithm>
#include <set>

#include "doctest.h"
#include "pwrules/chemgraph.hpp"
#include "pwrules/errors.hpp"
#include "support/oracles.hpp"

using namespace pwrules;
using namespace pwrules::chem;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected Error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("parse_smiles basics") {
  Molecule methane = parse_smiles("C");
  CHECK(methane.atom_count() == 1);
  CHECK(methane.atoms[0].h_count == 4);
  CHECK(methane.bond_count() == 0);

  Molecule ethanol = parse_smiles("CCO");
  CHECK(ethanol.atom_count() == 3);
  CHECK(ethanol.bond_count() == 2);
  for (const Bond& b : ethanol.bonds) CHECK(b.order == BondOrder::Single);

  Molecule benzene = parse_smiles("c1ccccc1");
  CHECK(benzene.atom_count() == 6);
  CHECK(benzene.bond_count() == 6);
  for (const Atom& a : benzene.atoms) {
    CHECK(a.aromatic);
    CHECK(a.element == "C");
    CHECK(a.h_count == 1);
  }
  for (const Bond& b : benzene.bonds) CHECK(b.order == BondOrder::Aromatic);
}

TEST_CASE("parse_smiles bracket atoms and heteroaromatics") {
  Molecule ammonium = parse_smiles("[NH4+]");
  CHECK(ammonium.atoms[0].charge == 1);
  CHECK(ammonium.atoms[0].h_count == 4);

  Molecule pyridine = parse_smiles("c1ccncc1");
  int n_idx = -1;
  for (int i = 0; i < pyridine.atom_count(); ++i)
    if (pyridine.atoms[i].element == "N") n_idx = i;
  REQUIRE(n_idx >= 0);
  CHECK(pyridine.atoms[n_idx].h_count == 0);

  Molecule furan = parse_smiles("c1ccoc1");
  int o_idx = -1;
  for (int i = 0; i < furan.atom_count(); ++i)
    if (furan.atoms[i].element == "O") o_idx = i;
  REQUIRE(o_idx >= 0);
  CHECK(furan.atoms[o_idx].h_count == 0);
  CHECK(furan.atoms[o_idx].aromatic);

  Molecule pyrrole = parse_smiles("c1cc[nH]c1");
  int nh = -1;
  for (int i = 0; i < pyrrole.atom_count(); ++i)
    if (pyrrole.atoms[i].element == "N") nh = i;
  CHECK(pyrrole.atoms[nh].h_count == 1);

  // stereo is ignored with a warning
  Molecule stereo = parse_smiles("C[C@@H](O)N");
  CHECK(!stereo.warnings.empty());
}

TEST_CASE("parse_smiles errors") {
  CHECK(kind_of([] { parse_smiles("C1CC"); }) == ErrorKind::Syntax);      // unclosed ring
  CHECK(kind_of([] { parse_smiles("[CH4"); }) == ErrorKind::Syntax);      // unbalanced bracket
  CHECK(kind_of([] { parse_smiles("C(C"); }) == ErrorKind::Syntax);       // unbalanced paren
  CHECK(kind_of([] { parse_smiles("C(C)(C)(C)(C)C"); }) == ErrorKind::Valence);
  CHECK(kind_of([] { parse_smiles(""); }) == ErrorKind::Syntax);
  CHECK(kind_of([] { parse_smiles("CC.CC"); }) == ErrorKind::Syntax);     // use parse_components

  auto comps = parse_components("CC.O");
  CHECK(comps.size() == 2);
  CHECK(comps[0].atom_count() == 2);
  CHECK(comps[1].atom_count() == 1);
}

TEST_CASE("canonical_key identity and determinism") {
  CHECK(canonical_key(parse_smiles("OCC")) == canonical_key(parse_smiles("CCO")));
  CHECK(canonical_key(parse_smiles("CCO")) != canonical_key(parse_smiles("CCC")));
  std::string k1 = canonical_key(parse_smiles("c1ccccc1C"));
  std::string k2 = canonical_key(parse_smiles("Cc1ccccc1"));
  std::string k3 = canonical_key(parse_smiles("c1ccc(C)cc1"));
  CHECK(k1 == k2);
  CHECK(k1 == k3);

  // key re-parses and is a canonical fixpoint
  Molecule reparsed = parse_smiles(k1);
  CHECK(canonical_key(reparsed) == k1);
}

TEST_CASE("canonical_key distinguishes charge, aromaticity, hydrogens") {
  CHECK(canonical_key(parse_smiles("[O-]C")) != canonical_key(parse_smiles("OC")));
  CHECK(canonical_key(parse_smiles("C1CCCCC1")) != canonical_key(parse_smiles("c1ccccc1")));
  CHECK(canonical_key(parse_smiles("[CH2]C")) != canonical_key(parse_smiles("CC")));
}

TEST_CASE("canonical_key round-trips on random molecules") {
  Rng rng(4242);
  for (int i = 0; i < 300; ++i) {
    Molecule m = testsupport::random_molecule(rng, 10);
    std::string key = canonical_key(m);
    Molecule back = parse_smiles(key);
    CHECK(canonical_key(back) == key);
  }
}

TEST_CASE("canonical_key invariant under atom relabeling") {
  Rng rng(777);
  for (int i = 0; i < 300; ++i) {
    Molecule m = testsupport::random_molecule(rng, 9);
    // random permutation of atom indices
    std::vector<int> perm(m.atom_count());
    for (int j = 0; j < m.atom_count(); ++j) perm[j] = j;
    rng.shuffle(perm);
    Molecule p;
    p.atoms.resize(m.atom_count());
    for (int j = 0; j < m.atom_count(); ++j) p.atoms[perm[j]] = m.atoms[j];
    for (const Bond& b : m.bonds) p.bonds.push_back({perm[b.a], perm[b.b], b.order});
    p.finalize();
    CHECK(canonical_key(m) == canonical_key(p));
  }
}

TEST_CASE("find_substructure examples") {
  auto hits1 = find_substructure(parse_smiles("C"), parse_smiles("CC"));
  CHECK(hits1.size() == 2);

  auto hits2 = find_substructure(parse_smiles("CO"), parse_smiles("CCO"));
  CHECK(hits2.size() == 1);

  auto hits3 = find_substructure(parse_smiles("c1ccccc1"), parse_smiles("Cc1ccccc1"));
  CHECK(hits3.size() == 1);
  // cross-check against the independent brute force
  auto brute = testsupport::brute_force_substructure_sets(parse_smiles("c1ccccc1"),
                                                          parse_smiles("Cc1ccccc1"));
  CHECK(brute.size() == 1);
}

TEST_CASE("find_substructure wildcards and limits") {
  // wildcard matches any atom through a single bond
  auto hits = find_substructure(parse_smiles("*O"), parse_smiles("CCO"));
  CHECK(hits.size() == 1);

  CHECK_THROWS_AS(find_substructure(parse_smiles("C"), parse_smiles("CCCCCCCC"), 3), Error);
}

TEST_CASE("find_substructure mappings preserve bonds") {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    Molecule target = testsupport::random_molecule(rng, 10);
    Molecule pattern = testsupport::random_molecule(rng, 4);
    std::vector<AtomMapping> hits;
    try {
      hits = find_substructure(pattern, target);
    } catch (const Error&) {
      continue;
    }
    for (const AtomMapping& m : hits) {
      for (const Bond& pb : pattern.bonds) {
        int tb = target.bond_between(m.pairs[pb.a], m.pairs[pb.b]);
        REQUIRE(tb >= 0);
        CHECK(target.bonds[tb].order == pb.order);
      }
    }
  }
}

TEST_CASE("find_substructure equals brute force on random pairs") {
  Rng rng(123);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    Molecule target = testsupport::random_molecule(rng, 12);
    Molecule pattern = testsupport::random_molecule(rng, 4);
    std::set<std::vector<int>> expect = testsupport::brute_force_substructure_sets(pattern, target);
    std::vector<AtomMapping> got;
    try {
      got = find_substructure(pattern, target, 1000000);
    } catch (const Error&) {
      continue;
    }
    CHECK(got.size() == expect.size());
    for (const AtomMapping& m : got) {
      std::vector<int> s(m.pairs);
      std::sort(s.begin(), s.end());
      CHECK(expect.count(s) == 1);
    }
    ++checked;
  }
  CHECK(checked > 250);
}

TEST_CASE("descriptors") {
  DescriptorSet water = descriptors(parse_smiles("O"));
  CHECK(water.hbd == 1);
  CHECK(water.hba == 1);
  CHECK(water.rotatable_bonds == 0);

  DescriptorSet ethanol = descriptors(parse_smiles("CCO"));
  CHECK(ethanol.mw == doctest::Approx(46.07).epsilon(0.001));
  CHECK(ethanol.rotatable_bonds == 0);
  CHECK(ethanol.hba == 1);
  CHECK(ethanol.hbd == 1);

  DescriptorSet butane = descriptors(parse_smiles("CCCC"));
  CHECK(butane.rotatable_bonds == 1);

  // amide C-N is not rotatable
  DescriptorSet amide = descriptors(parse_smiles("CC(=O)NC"));
  CHECK(amide.rotatable_bonds == 0);

  // pyrrole aromatic N-H is a donor but not an acceptor
  DescriptorSet pyrrole = descriptors(parse_smiles("c1cc[nH]c1"));
  CHECK(pyrrole.hbd == 1);
  CHECK(pyrrole.hba == 0);
}

TEST_CASE("descriptor mw equals sum of standard masses") {
  Rng rng(55);
  for (int i = 0; i < 1000; ++i) {
    Molecule m = testsupport::random_molecule(rng, 12);
    double expect = 0.0;
    for (const Atom& a : m.atoms) expect += atomic_mass(a.element) + a.h_count * 1.008;
    CHECK(descriptors(m).mw == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("rule_of_three") {
  CHECK(rule_of_three(descriptors(parse_smiles("O"))));

  DescriptorSet d;
  d.mw = 301.0;
  CHECK_FALSE(rule_of_three(d));

  d.mw = 300.0;
  d.hbd = 3;
  d.hba = 3;
  d.rotatable_bonds = 3;
  CHECK(rule_of_three(d));

  d.logp = 3.5;
  CHECK_FALSE(rule_of_three(d));
  d.logp = 3.0;
  d.tpsa = 60.0;
  CHECK(rule_of_three(d));
  d.tpsa = 60.5;
  CHECK_FALSE(rule_of_three(d));
}
