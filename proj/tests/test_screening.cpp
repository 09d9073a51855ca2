#include <cmath>

#include "doctest.h"
#include "pwrules/errors.hpp"
#include "pwrules/screening.hpp"
#include "pwrules/util.hpp"

using namespace pwrules;
using namespace pwrules::screen;

namespace {

frag::FragmentLibrary lib_with_counts(const std::vector<std::pair<std::string, long>>& entries) {
  frag::FragmentLibrary lib;
  int i = 1;
  for (const auto& [smiles, count] : entries) {
    frag::Fragment f;
    f.fragment_id = "frag_" + std::to_string(i++);
    f.key = chem::canonical_key(chem::parse_smiles(smiles));
    f.count = count;
    f.heavy_atoms = chem::parse_smiles(smiles).heavy_atom_count();
    lib.fragments.push_back(f);
  }
  lib.corpus_size = 1000;
  for (auto& f : lib.fragments) f.freq = static_cast<double>(f.count) / 1000.0;
  lib.rebuild_index();
  return lib;
}

}  // namespace

TEST_CASE("specificity endpoints and log midpoint") {
  // counts e^1, e^2, e^3 (rounded): use exact powers via exp
  long c1 = 3, c2 = 20, c3 = 148;  // close to e, e^2, e^3 only in spirit; use exact math below
  (void)c1; (void)c2; (void)c3;
  frag::FragmentLibrary lib =
      lib_with_counts({{"c1ccccc1", 1000}, {"C1CCOCC1", 50}, {"c1ccncc1", 2}});
  // rarest -> 1, most common -> 0
  CHECK(specificity("frag_3", lib) == doctest::Approx(1.0));
  CHECK(specificity("frag_1", lib) == doctest::Approx(0.0));
  double mid = specificity("frag_2", lib);
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
  // exact value: 1 - (ln50 - ln2)/(ln1000 - ln2)
  CHECK(mid == doctest::Approx(1.0 - (std::log(50.0) - std::log(2.0)) /
                                         (std::log(1000.0) - std::log(2.0))));

  CHECK_THROWS_AS(specificity("frag_99", lib), Error);

  // degenerate: all counts equal -> 1 for all
  frag::FragmentLibrary flat = lib_with_counts({{"c1ccccc1", 5}, {"C1CCOCC1", 5}});
  CHECK(specificity("frag_1", flat) == doctest::Approx(1.0));
  CHECK(specificity("frag_2", flat) == doctest::Approx(1.0));
}

TEST_CASE("specificity log-midpoint example with exact e powers") {
  // counts e^1, e^2, e^3 cannot be integers; check the formula directly
  double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  double lmin = std::log(e1), lmax = std::log(e3);
  double s = 1.0 - (std::log(e2) - lmin) / (lmax - lmin);
  CHECK(s == doctest::Approx(0.5));
}

TEST_CASE("pwscore sums covered comprehensive scores") {
  // molecule with two rings joined by CH2
  chem::Molecule mol = chem::parse_smiles("c1ccccc1CC1CCOCC1");
  std::map<std::string, chem::Molecule> patterns;
  patterns["frag_b"] = chem::parse_smiles("c1ccccc1");
  patterns["frag_o"] = chem::parse_smiles("C1CCOCC1");
  patterns["frag_x"] = chem::parse_smiles("c1ccsc1");  // absent

  std::vector<ScoredFragment> frags{
      {"frag_b", 0.9, 1.0, 0.9}, {"frag_o", 0.3, 1.0, 0.3}, {"frag_x", 0.99, 1.0, 0.99}};

  ScreeningResult r = pwscore("m1", mol, frags, patterns);
  CHECK(r.pwscore == doctest::Approx(1.2));  // two non-overlapping matches
  REQUIRE(r.covered.size() == 2);
  CHECK(r.covered[0].fragment_id == "frag_b");  // higher s_comp first
  CHECK(r.skipped.empty());

  // no matches -> 0
  ScreeningResult none = pwscore("m2", chem::parse_smiles("CC"), frags, patterns);
  CHECK(none.pwscore == 0.0);
  CHECK(none.covered.empty());
}

TEST_CASE("pwscore atom cap rejects overlapping fragments") {
  chem::Molecule mol = chem::parse_smiles("c1ccccc1");
  std::map<std::string, chem::Molecule> patterns;
  patterns["frag_big"] = chem::parse_smiles("c1ccccc1");
  patterns["frag_small"] = chem::parse_smiles("cc");  // any aromatic pair

  std::vector<ScoredFragment> frags{{"frag_big", 0.9, 1.0, 0.9}, {"frag_small", 0.3, 1.0, 0.3}};

  // cap 1: the 0.9 ring covers all atoms once; the 0.3 fragment shares atoms
  ScreeningResult r = pwscore("m", mol, frags, patterns, 1);
  CHECK(r.pwscore == doctest::Approx(0.9));
  REQUIRE(r.covered.size() == 1);
  CHECK(r.covered[0].fragment_id == "frag_big");
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0] == "frag_small");

  // cap 2 admits both
  ScreeningResult r2 = pwscore("m", mol, frags, patterns, 2);
  CHECK(r2.pwscore == doctest::Approx(1.2));

  // per-result invariant: pwscore equals the covered sum
  double sum = 0.0;
  for (const auto& c : r2.covered) sum += c.s_comp;
  CHECK(r2.pwscore == doctest::Approx(sum));
}

TEST_CASE("pwscore monotonicity and input-order invariance") {
  Rng rng(37);
  chem::Molecule mol = chem::parse_smiles("c1ccccc1CC1CCOCC1");
  std::map<std::string, chem::Molecule> patterns;
  patterns["frag_1"] = chem::parse_smiles("c1ccccc1");
  patterns["frag_2"] = chem::parse_smiles("C1CCOCC1");
  patterns["frag_3"] = chem::parse_smiles("cc");
  patterns["frag_4"] = chem::parse_smiles("CC");

  for (int iter = 0; iter < 200; ++iter) {
    std::vector<ScoredFragment> frags;
    int n = 1 + static_cast<int>(rng.next_below(4));
    for (int i = 0; i < n; ++i) {
      double conf = rng.next_double();
      frags.push_back({"frag_" + std::to_string(i + 1), conf, 1.0, conf});
    }
    ScreeningResult base = pwscore("m", mol, frags, patterns, 2);

    // input ordering does not matter
    std::vector<ScoredFragment> shuffled(frags);
    rng.shuffle(shuffled);
    CHECK(pwscore("m", mol, shuffled, patterns, 2).pwscore ==
          doctest::Approx(base.pwscore).epsilon(1e-12));

    // adding a fragment never decreases the score
    if (n < 4) {
      double conf = rng.next_double();
      frags.push_back({"frag_" + std::to_string(n + 1), conf, 1.0, conf});
      CHECK(pwscore("m", mol, frags, patterns, 2).pwscore >= base.pwscore - 1e-12);
    }
  }
}

TEST_CASE("zscore_fuse") {
  std::map<std::string, double> a{{"m1", 1.0}, {"m2", 2.0}, {"m3", 3.0}};

  // identical inputs -> ranking preserved
  auto f1 = zscore_fuse(a, a, Orientation::higher_better, Orientation::higher_better);
  CHECK(f1.at("m3") > f1.at("m2"));
  CHECK(f1.at("m2") > f1.at("m1"));

  // constant second method contributes nothing
  std::map<std::string, double> constant{{"m1", 7.0}, {"m2", 7.0}, {"m3", 7.0}};
  auto f2 = zscore_fuse(a, constant, Orientation::higher_better, Orientation::higher_better);
  auto ranked = rank_by_score(f2);
  CHECK(ranked == std::vector<std::string>{"m3", "m2", "m1"});

  // perfect anticorrelation -> all zeros
  std::map<std::string, double> b{{"m1", 3.0}, {"m2", 2.0}, {"m3", 1.0}};
  auto f3 = zscore_fuse(a, b, Orientation::higher_better, Orientation::higher_better);
  for (const auto& [id, v] : f3) CHECK(v == doctest::Approx(0.0));

  // lower-better orientation flips the ranking contribution
  auto f4 = zscore_fuse(a, b, Orientation::higher_better, Orientation::lower_better);
  CHECK(rank_by_score(f4) == std::vector<std::string>{"m3", "m2", "m1"});

  std::map<std::string, double> mismatched{{"m1", 1.0}, {"mX", 2.0}, {"m3", 3.0}};
  CHECK_THROWS_AS(zscore_fuse(a, mismatched, Orientation::higher_better,
                              Orientation::higher_better),
                  Error);
}

TEST_CASE("zscore_fuse affine invariance") {
  Rng rng(81);
  for (int iter = 0; iter < 200; ++iter) {
    std::map<std::string, double> a, b;
    int n = 3 + static_cast<int>(rng.next_below(20));
    for (int i = 0; i < n; ++i) {
      std::string id = "m" + std::to_string(i);
      a[id] = rng.uniform(-10, 10);
      b[id] = rng.uniform(-10, 10);
    }
    auto base = zscore_fuse(a, b, Orientation::higher_better, Orientation::higher_better);
    double alpha = 0.1 + 5.0 * rng.next_double(), beta = rng.uniform(-100, 100);
    std::map<std::string, double> a2;
    for (const auto& [id, v] : a) a2[id] = alpha * v + beta;
    auto scaled = zscore_fuse(a2, b, Orientation::higher_better, Orientation::higher_better);
    for (const auto& [id, v] : base) CHECK(std::abs(scaled.at(id) - v) <= 1e-9);
  }
}

TEST_CASE("enrichment_factor") {
  // 1000 compounds, 50 actives, 5 actives in the top 10 -> EF1% = 10
  std::vector<std::string> ranked;
  std::set<std::string> actives;
  for (int i = 0; i < 1000; ++i) ranked.push_back("m" + std::to_string(i));
  for (int i = 0; i < 5; ++i) actives.insert("m" + std::to_string(i));          // top hits
  for (int i = 100; i < 145; ++i) actives.insert("m" + std::to_string(i));      // rest
  CHECK(enrichment_factor(ranked, actives, 1.0) == doctest::Approx(10.0).epsilon(1e-12));

  // all actives ranked first with top-x% entirely active -> EF = N/n
  std::vector<std::string> perfect;
  std::set<std::string> pa;
  for (int i = 0; i < 100; ++i) perfect.push_back("m" + std::to_string(i));
  for (int i = 0; i < 10; ++i) pa.insert("m" + std::to_string(i));
  CHECK(enrichment_factor(perfect, pa, 10.0) == doctest::Approx(10.0));
  CHECK(enrichment_factor(perfect, pa, 5.0) == doctest::Approx(10.0));  // still all-active prefix

  CHECK_THROWS_AS(enrichment_factor(perfect, {}, 1.0), Error);
}

TEST_CASE("enrichment_factor bounds and random-ranking expectation") {
  Rng rng(4141);
  // EF bounds on random instances
  for (int iter = 0; iter < 200; ++iter) {
    int n = 20 + static_cast<int>(rng.next_below(200));
    std::vector<std::string> ranked;
    std::set<std::string> actives;
    for (int i = 0; i < n; ++i) ranked.push_back("m" + std::to_string(i));
    int n_act = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(n / 2)));
    std::vector<std::string> shuffled(ranked);
    rng.shuffle(shuffled);
    for (int i = 0; i < n_act; ++i) actives.insert(shuffled[i]);
    double x = 1.0 + 20.0 * rng.next_double();
    double ef = enrichment_factor(ranked, actives, x);
    CHECK(ef >= 0.0);
    CHECK(ef <= static_cast<double>(n) / n_act + 1e-12);
  }

  // Monte-Carlo: mean EF over random rankings ~ 1 within 3 sigma
  const int n = 200, n_act = 40, resamples = 1000;
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("m" + std::to_string(i));
  std::set<std::string> actives(ids.begin(), ids.begin() + n_act);
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < resamples; ++r) {
    std::vector<std::string> shuffled(ids);
    rng.shuffle(shuffled);
    double ef = enrichment_factor(shuffled, actives, 5.0);
    sum += ef;
    sumsq += ef * ef;
  }
  double mean = sum / resamples;
  double sd = std::sqrt(sumsq / resamples - mean * mean);
  double sem = sd / std::sqrt(static_cast<double>(resamples));
  CHECK(std::abs(mean - 1.0) <= 3.0 * sem);
}

TEST_CASE("binary_metrics") {
  double precision = 0, mcc = 0;

  // perfect predictions
  binary_metrics({1, 1, 0, 0}, {1, 1, 0, 0}, &precision, &mcc);
  CHECK(precision == doctest::Approx(1.0));
  CHECK(mcc == doctest::Approx(1.0));

  // all-positive calls on balanced truth
  binary_metrics({1, 1, 1, 1}, {1, 1, 0, 0}, &precision, &mcc);
  CHECK(precision == doctest::Approx(0.5));
  CHECK(mcc == doctest::Approx(0.0));

  // no positive calls: precision 0 by convention
  binary_metrics({0, 0}, {1, 0}, &precision, &mcc);
  CHECK(precision == 0.0);
}

TEST_CASE("rank_auc") {
  // perfect separation
  auto a = rank_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  REQUIRE(a.has_value());
  CHECK(*a == doctest::Approx(1.0));

  // all-equal scores -> 0.5 by tie convention
  auto t = rank_auc({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0});
  CHECK(*t == doctest::Approx(0.5));

  // single-class truth -> absent
  CHECK_FALSE(rank_auc({0.1, 0.2}, {1, 1}).has_value());
}

TEST_CASE("rank_auc equals pairwise probability oracle") {
  Rng rng(909);
  for (int iter = 0; iter < 200; ++iter) {
    int n = 2 + static_cast<int>(rng.next_below(199));
    std::vector<double> scores(n);
    std::vector<uint8_t> truth(n);
    bool has0 = false, has1 = false;
    for (int i = 0; i < n; ++i) {
      scores[i] = rng.next_double() < 0.3 ? 0.5 : rng.next_double();  // force some ties
      truth[i] = rng.next_double() < 0.4 ? 1 : 0;
      (truth[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;

    // oracle: average over all (active, inactive) pairs
    double wins = 0.0;
    long pairs = 0;
    for (int i = 0; i < n; ++i) {
      if (!truth[i]) continue;
      for (int j = 0; j < n; ++j) {
        if (truth[j]) continue;
        ++pairs;
        if (scores[i] > scores[j])
          wins += 1.0;
        else if (scores[i] == scores[j])
          wins += 0.5;
      }
    }
    auto auc = rank_auc(scores, truth);
    REQUIRE(auc.has_value());
    CHECK(*auc == doctest::Approx(wins / pairs).epsilon(1e-12));
  }
}
