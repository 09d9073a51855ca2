#include <cmath>
#include <numeric>

#include "doctest.h"
#include "pwrules/attribution.hpp"
#include "pwrules/errors.hpp"
#include "support/properties.hpp"

using namespace pwrules;
using namespace pwrules::attr;

namespace {

// linear F(x) = sum_w sum_d W[w][d] x[w][d]
ScalarFn linear_fn(const std::vector<std::vector<double>>& weights) {
  return [weights](const std::vector<std::vector<double>>& x,
                   std::vector<std::vector<double>>* grad) {
    double v = 0.0;
    for (size_t w = 0; w < x.size(); ++w)
      for (size_t d = 0; d < x[w].size(); ++d) v += weights[w][d] * x[w][d];
    if (grad) *grad = weights;
    return v;
  };
}

double sum_all(const std::vector<std::vector<double>>& m) {
  double s = 0.0;
  for (const auto& row : m) s = std::accumulate(row.begin(), row.end(), s);
  return s;
}

}  // namespace

TEST_CASE("integrated gradients is exact for linear maps at any step count") {
  Rng rng(71);
  for (int iter = 0; iter < 50; ++iter) {
    int n_words = 1 + static_cast<int>(rng.next_below(4));
    int dim = 1 + static_cast<int>(rng.next_below(6));
    std::vector<std::vector<double>> w(n_words, std::vector<double>(dim)),
        x(n_words, std::vector<double>(dim)), zero(n_words, std::vector<double>(dim, 0.0));
    for (auto& row : w)
      for (double& v : row) v = rng.uniform(-2.0, 2.0);
    for (auto& row : x)
      for (double& v : row) v = rng.uniform(-2.0, 2.0);

    for (int steps : {2, 3, 17}) {
      auto attr = integrated_gradients(linear_fn(w), x, zero, steps);
      for (int i = 0; i < n_words; ++i)
        for (int d = 0; d < dim; ++d)
          CHECK(attr[i][d] == doctest::Approx(w[i][d] * x[i][d]).epsilon(1e-12));
    }
  }
}

TEST_CASE("integrated gradients vanish when x equals the baseline") {
  testsupport::ToyProblem toy = testsupport::random_toy(5);
  auto attr = integrated_gradients(logit_fn(toy.state, toy.target_fragment), toy.words, toy.words, 8);
  for (const auto& row : attr)
    for (double v : row) CHECK(v == 0.0);
}

TEST_CASE("integrated gradients completeness on toy transformers") {
  // random nonzero baselines: the completeness axiom holds for any baseline,
  // and the all-zero matrix sits on a LayerNorm scale singularity that no
  // fixed-step quadrature can resolve
  for (uint64_t seed = 0; seed < 10; ++seed) {
    testsupport::ToyProblem toy = testsupport::random_toy(seed);
    ScalarFn fn = logit_fn(toy.state, toy.target_fragment);
    Rng rng(seed * 31 + 5);
    std::vector<std::vector<double>> baseline(toy.words.size(),
                                              std::vector<double>(toy.words[0].size(), 0.0));
    for (auto& row : baseline)
      for (double& v : row) v = rng.uniform(-1.0, 1.0);
    double fx = fn(toy.words, nullptr);
    double f0 = fn(baseline, nullptr);
    auto attr = integrated_gradients(fn, toy.words, baseline, 256);
    double gap = std::abs(sum_all(attr) - (fx - f0));
    CHECK(gap <= 1e-3 * std::abs(fx - f0) + 1e-6);
  }
}

TEST_CASE("doubling the step count keeps the completeness gap stable") {
  double total_m = 0.0, total_2m = 0.0;
  for (uint64_t seed = 100; seed < 130; ++seed) {
    testsupport::ToyProblem toy = testsupport::random_toy(seed);
    ScalarFn fn = logit_fn(toy.state, toy.target_fragment);
    std::vector<std::vector<double>> baseline(toy.words.size(),
                                              std::vector<double>(toy.words[0].size(), 0.0));
    double delta = fn(toy.words, nullptr) - fn(baseline, nullptr);
    auto a1 = integrated_gradients(fn, toy.words, baseline, 64);
    auto a2 = integrated_gradients(fn, toy.words, baseline, 128);
    total_m += std::abs(sum_all(a1) - delta);
    total_2m += std::abs(sum_all(a2) - delta);
  }
  CHECK(total_2m <= 1.1 * total_m + 1e-9);
}

TEST_CASE("IG linearity in the target: sum of logits attributes additively") {
  testsupport::ToyProblem toy = testsupport::random_toy(42);
  if (toy.state.cfg.n_fragments < 2) toy = testsupport::random_toy(43);
  REQUIRE(toy.state.cfg.n_fragments >= 2);
  ScalarFn fa = logit_fn(toy.state, 0);
  ScalarFn fb = logit_fn(toy.state, 1);
  ScalarFn fsum = [&](const std::vector<std::vector<double>>& x,
                      std::vector<std::vector<double>>* grad) {
    std::vector<std::vector<double>> ga, gb;
    double v = fa(x, grad ? &ga : nullptr) + fb(x, grad ? &gb : nullptr);
    if (grad) {
      *grad = ga;
      for (size_t w = 0; w < gb.size(); ++w)
        for (size_t d = 0; d < gb[w].size(); ++d) (*grad)[w][d] += gb[w][d];
    }
    return v;
  };
  std::vector<std::vector<double>> baseline(toy.words.size(),
                                            std::vector<double>(toy.words[0].size(), 0.0));
  auto aa = integrated_gradients(fa, toy.words, baseline, 32);
  auto ab = integrated_gradients(fb, toy.words, baseline, 32);
  auto as = integrated_gradients(fsum, toy.words, baseline, 32);
  for (size_t w = 0; w < aa.size(); ++w)
    for (size_t d = 0; d < aa[w].size(); ++d)
      CHECK(as[w][d] == doctest::Approx(aa[w][d] + ab[w][d]).epsilon(1e-9));
}

TEST_CASE("condense") {
  auto s1 = condense({{1.0, 2.0, 2.0}});
  REQUIRE(s1.size() == 1);
  CHECK(s1[0] == doctest::Approx(1.0));

  auto s2 = condense({{3.0}, {4.0}});
  CHECK(s2[0] == doctest::Approx(0.6));
  CHECK(s2[1] == doctest::Approx(0.8));

  auto s3 = condense({{0.0, 0.0}, {0.0}});
  CHECK(s3[0] == 0.0);
  CHECK(s3[1] == 0.0);
}

TEST_CASE("select_words") {
  auto w1 = select_words({0.9, 0.05, 0.05});
  CHECK(w1 == std::vector<int>{0});

  // sorted 0.4, 0.3, 0.3 -> prefix {0.4, 0.3} (0.7 > 0.5)
  auto w2 = select_words({0.3, 0.3, 0.4});
  CHECK(w2 == std::vector<int>{2, 0});

  CHECK_THROWS_AS(select_words({-0.1, -0.5}), Error);

  // negative scores are excluded from the pool entirely
  auto w3 = select_words({-0.9, 0.2, 0.1});
  CHECK(w3 == std::vector<int>{1});  // 0.2 > 0.5 * 0.3
  auto w4 = select_words({-0.9, 0.2, 0.15, 0.1});
  CHECK(w4 == std::vector<int>{1, 2});  // 0.2 not > 0.225, 0.35 > 0.225
}

TEST_CASE("select_words independent of word ordering up to position relabel") {
  Rng rng(7);
  for (int iter = 0; iter < 1000; ++iter) {
    int n = 2 + static_cast<int>(rng.next_below(6));
    std::vector<double> scores(n);
    for (double& s : scores) s = rng.uniform(-1.0, 1.0);
    bool any_pos = false;
    for (double s : scores) any_pos |= s > 0.0;
    if (!any_pos) scores[0] = 0.5;

    auto base = select_words(scores);
    // reverse the word order; the selected score multiset must be identical
    std::vector<double> rev(scores.rbegin(), scores.rend());
    auto flipped = select_words(rev);
    std::vector<double> a, b;
    for (int i : base) a.push_back(scores[i]);
    for (int i : flipped) b.push_back(rev[i]);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]));
  }
}

TEST_CASE("extract_rules agreement gate and scoring") {
  testsupport::ToyProblem toy = testsupport::random_toy(3);
  const auto& cfg = toy.state.cfg;
  std::vector<std::string> keys;
  for (size_t w = 0; w < toy.words.size(); ++w) keys.push_back("WORD" + std::to_string(w));
  std::vector<std::string> frag_ids;
  for (int f = 0; f < cfg.n_fragments; ++f) frag_ids.push_back("frag_" + std::to_string(f + 1));

  std::vector<double> probs = model::predict(toy.state, toy.words);

  // all fragments labeled 1 and observed: rules emitted only where prob > 0.5
  std::vector<double> labels(cfg.n_fragments, 1.0);
  std::vector<uint8_t> observed(cfg.n_fragments, 1);
  auto rules = extract_rules(toy.state, keys, toy.words, frag_ids, labels, observed);
  for (const auto& r : rules) {
    int f = -1;
    for (int i = 0; i < cfg.n_fragments; ++i)
      if (frag_ids[i] == r.fragment_id) f = i;
    REQUIRE(f >= 0);
    CHECK(probs[f] > 0.5);
    CHECK(r.pred_score == doctest::Approx(probs[f]));
    CHECK(r.attr_score > 0.0);
    CHECK(r.attr_score <= 1.0 + 1e-12);
    CHECK(r.rule_score == doctest::Approx(std::sqrt(r.pred_score * r.attr_score)));
    CHECK(r.rule_score * r.rule_score ==
          doctest::Approx(r.pred_score * r.attr_score).epsilon(1e-12));
    CHECK(r.rule_score >= 0.0);
    CHECK(r.rule_score <= 1.0);
  }

  // fragments with label 0 or NA never emit rules
  std::fill(labels.begin(), labels.end(), 0.0);
  CHECK(extract_rules(toy.state, keys, toy.words, frag_ids, labels, observed).empty());
  std::fill(labels.begin(), labels.end(), 1.0);
  std::fill(observed.begin(), observed.end(), 0);
  CHECK(extract_rules(toy.state, keys, toy.words, frag_ids, labels, observed).empty());
}

TEST_CASE("rule score example: pred 0.81 attr 0.25 gives 0.45") {
  CHECK(std::sqrt(0.81 * 0.25) == doctest::Approx(0.45));
}
