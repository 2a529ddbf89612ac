#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "thinprice/errors.hpp"
#include "thinprice/inference.hpp"
#include "thinprice/synth.hpp"
#include "thinprice/testing.hpp"

using namespace thinprice;

namespace {

std::vector<double> random_normals(std::size_t n, std::uint64_t seed, double mean = 0.0,
                                   double sd = 1.0) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> g(mean, sd);
    std::vector<double> out(n);
    for (double& x : out) x = g(eng);
    return out;
}

double permutation_p_value(const std::vector<double>& a, const std::vector<double>& b,
                           int permutations, std::uint64_t seed) {
    double observed = ks_two_sample(a, b).statistic;
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::mt19937_64 eng(seed);
    int at_least = 0;
    std::vector<double> left(a.size());
    std::vector<double> right(b.size());
    for (int p = 0; p < permutations; ++p) {
        std::shuffle(pooled.begin(), pooled.end(), eng);
        std::copy(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(a.size()),
                  left.begin());
        std::copy(pooled.begin() + static_cast<std::ptrdiff_t>(a.size()), pooled.end(),
                  right.begin());
        if (ks_two_sample(left, right).statistic >= observed - 1e-12) ++at_least;
    }
    return static_cast<double>(at_least) / static_cast<double>(permutations);
}

SurveyDataset audit_dataset(double jitter, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.item_code = 77;
    cfg.fsu_count = 80;
    cfg.households_per_fsu_min = 3;
    cfg.households_per_fsu_max = 6;
    cfg.state_count = 3;
    cfg.consumption_prob_min = 0.5;
    cfg.consumption_prob_max = 0.9;
    cfg.price_jitter_sd = jitter;
    cfg.noise_sd = 0.3;
    GroundTruth truth;
    truth.sector_effects = {0.0, 0.25};
    truth.state_effects = {0.0, 0.1, -0.05};
    truth.gamma_size = 0.05;
    truth.gamma_price = -1.3;
    truth.gamma_expenditure = 0.75;
    fill_consumption_probs(truth, cfg, seed);
    return generate_survey(cfg, truth, seed);
}

}  // namespace

TEST_CASE("identical samples give zero distance and p-value one") {
    std::vector<double> a{1.0, 2.0, 3.0, 4.0};
    KsResult r = ks_two_sample(a, a);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == 1.0);
    CHECK(r.n1 == 4);
    CHECK(r.n2 == 4);
}

TEST_CASE("disjoint samples give the maximal distance") {
    std::vector<double> a{1.0, 2.0};
    std::vector<double> b{5.0, 6.0, 7.0};
    KsResult r = ks_two_sample(a, b);
    CHECK(r.statistic == 1.0);
    CHECK(r.p_value < 0.5);
}

TEST_CASE("the statistic is symmetric in its arguments") {
    std::vector<double> a = random_normals(40, 1);
    std::vector<double> b = random_normals(25, 2, 0.3);
    KsResult ab = ks_two_sample(a, b);
    KsResult ba = ks_two_sample(b, a);
    CHECK(ab.statistic == ba.statistic);
    CHECK(ab.p_value == ba.p_value);
}

TEST_CASE("monotone transforms leave the statistic unchanged") {
    std::vector<double> a = random_normals(30, 3);
    std::vector<double> b = random_normals(30, 4, 0.5);
    double base = ks_two_sample(a, b).statistic;
    for (double& x : a) x = std::exp(x);
    for (double& x : b) x = std::exp(x);
    CHECK(ks_two_sample(a, b).statistic == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("ties are evaluated on the pooled support") {
    // ECDFs at the two pooled values: F1 = (2/3, 1), F2 = (1/3, 1).
    std::vector<double> a{1.0, 1.0, 2.0};
    std::vector<double> b{1.0, 2.0, 2.0};
    KsResult r = ks_two_sample(a, b);
    CHECK(r.statistic == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("empty samples are refused") {
    std::vector<double> a{1.0};
    std::vector<double> none;
    CHECK_THROWS_AS(ks_two_sample(none, a), DataError);
    CHECK_THROWS_AS(ks_two_sample(a, none), DataError);
}

TEST_CASE("tail function reference values") {
    CHECK(kolmogorov_sf(0.5) == doctest::Approx(0.96394524366487509).epsilon(1e-12));
    CHECK(kolmogorov_sf(1.0) == doctest::Approx(0.26999967167735452).epsilon(1e-12));
    CHECK(kolmogorov_sf(2.0) == doctest::Approx(0.00067092525577969535).epsilon(1e-12));
    CHECK(kolmogorov_sf(0.0) == 1.0);
    CHECK(kolmogorov_sf(-3.0) == 1.0);
    CHECK(kolmogorov_sf(1e-4) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(kolmogorov_sf(8.0) >= 0.0);
    CHECK(kolmogorov_sf(8.0) < 1e-12);
}

TEST_CASE("tail function is continuous where the series switch") {
    double below = kolmogorov_sf(std::nextafter(1.0, 0.0));
    double above = kolmogorov_sf(std::nextafter(1.0, 2.0));
    CHECK(std::abs(below - above) < 1e-10);
    // And monotone non-increasing across the whole range.
    double prev = 1.0;
    for (double lam = 0.05; lam < 3.0; lam += 0.05) {
        double cur = kolmogorov_sf(lam);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}

TEST_CASE("asymptotic p-values track a permutation oracle at n = 30") {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        std::vector<double> a = random_normals(30, seed);
        std::vector<double> b = random_normals(30, seed + 100, 0.4, 1.2);
        double asymptotic = ks_two_sample(a, b).p_value;
        double oracle = permutation_p_value(a, b, 20000, seed);
        CHECK(std::abs(asymptotic - oracle) <= 0.02);
    }
}

TEST_CASE("binomial upper tails match exact references") {
    CHECK(binomial_upper_tail(1000, 0.05, 61) ==
          doctest::Approx(0.06706251863330792).epsilon(1e-10));
    CHECK(binomial_upper_tail(1000, 0.05, 62) ==
          doctest::Approx(0.0511095590418844).epsilon(1e-10));
    CHECK(binomial_upper_tail(1000, 0.05, 63) ==
          doctest::Approx(0.038393235564510304).epsilon(1e-10));
    CHECK(binomial_upper_tail(10, 0.5, 0) == 1.0);
    CHECK(binomial_upper_tail(10, 0.5, 11) == 0.0);
    CHECK(binomial_upper_tail(2, 0.5, 2) == doctest::Approx(0.25).epsilon(1e-14));
    // Complement: with successes and failures swapped, P(X >= k) and
    // P(10 - X >= 11 - k) partition the sample space.
    for (int k : {1, 5, 9}) {
        double upper = binomial_upper_tail(10, 0.3, k);
        double swapped = binomial_upper_tail(10, 0.7, 10 - k + 1);
        CHECK(upper + swapped == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("rejection rank worked examples") {
    CHECK(rejection_rank(1, 0.5, 0.5) == 1);
    CHECK(rejection_rank(20, 0.5, 0.05) == 15);
    CHECK(rejection_rank(200, 0.05, 0.05) == 16);
    // At 1000 repetitions and alpha = meta = 0.05 the exact tails are
    // P(>=62) = 0.05110955... > 0.05 >= P(>=63) = 0.03839323..., so the
    // smallest admissible rank is 63.
    CHECK(rejection_rank(1000, 0.05, 0.05) == 63);
}

TEST_CASE("rejection rank is the first admissible order statistic") {
    for (int n : {10, 100, 1000}) {
        for (double alpha : {0.01, 0.05, 0.5, 0.9}) {
            for (double meta : {0.01, 0.05, 0.5}) {
                int c = rejection_rank(n, alpha, meta);
                CHECK(c >= 1);
                CHECK(c <= n + 1);
                CHECK(binomial_upper_tail(n, alpha, c) <= meta);
                if (c > 1) CHECK(binomial_upper_tail(n, alpha, c - 1) > meta);
            }
        }
    }
}

TEST_CASE("rejection rank moves the right way with its inputs") {
    CHECK(rejection_rank(1000, 0.05, 0.01) >= rejection_rank(1000, 0.05, 0.05));
    CHECK(rejection_rank(1000, 0.10, 0.05) >= rejection_rank(1000, 0.05, 0.05));
    CHECK(rejection_rank(2000, 0.05, 0.05) >= rejection_rank(1000, 0.05, 0.05));

    CHECK_THROWS_AS(rejection_rank(0, 0.05, 0.05), ConfigError);
    CHECK_THROWS_AS(rejection_rank(100, 0.0, 0.05), ConfigError);
    CHECK_THROWS_AS(rejection_rank(100, 1.0, 0.05), ConfigError);
    CHECK_THROWS_AS(rejection_rank(100, 0.05, 0.0), ConfigError);
}

TEST_CASE("counting and order statistics agree on the decision") {
    std::mt19937_64 eng(5150);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 50;
        double alpha = 0.3;
        std::vector<double> p(n);
        for (double& x : p) x = u(eng);
        int c = rejection_rank(n, alpha, 0.05);
        std::size_t below = 0;
        for (double x : p) below += x < alpha;
        std::vector<double> sorted = p;
        std::sort(sorted.begin(), sorted.end());
        bool by_count = below >= static_cast<std::size_t>(c);
        bool by_order = c <= n && sorted[static_cast<std::size_t>(c) - 1] < alpha;
        CHECK(by_count == by_order);
    }
}

TEST_CASE("the audit accepts homogeneous prices with all repetitions degenerate") {
    SurveyDataset ds = audit_dataset(0.0, 61);
    RepetitionPlan plan{17, 40};
    RepeatedTestResult r = repeated_ks_procedure(ds, 77, plan, 0.05, 0.05);
    CHECK(r.repetitions == 40);
    CHECK(r.rank == rejection_rank(40, 0.05, 0.05));
    CHECK_FALSE(r.reject);
    CHECK(r.below_alpha == 0);
    for (int i = 0; i < 40; ++i) {
        CHECK(r.degenerate[static_cast<std::size_t>(i)] == 1);
        CHECK(r.p_values[static_cast<std::size_t>(i)] == 1.0);
        CHECK(r.delta_ratio[static_cast<std::size_t>(i)] == 0.0);
    }
    CHECK(r.delta_ratio_ci == std::pair<double, double>{0.0, 0.0});
}

TEST_CASE("the audit is deterministic and thread-count invariant") {
    SurveyDataset ds = audit_dataset(0.25, 62);
    RepetitionPlan plan{23, 30};
    RepeatedTestResult a = repeated_ks_procedure(ds, 77, plan, 0.05, 0.05, 1);
    RepeatedTestResult b = repeated_ks_procedure(ds, 77, plan, 0.05, 0.05, 1);
    RepeatedTestResult c = repeated_ks_procedure(ds, 77, plan, 0.05, 0.05, 3);
    CHECK(a.p_values == b.p_values);
    CHECK(a.delta_price == b.delta_price);
    CHECK(a.p_values == c.p_values);
    CHECK(a.delta_price == c.delta_price);
    CHECK(a.delta_ratio == c.delta_ratio);
    CHECK(a.reject == c.reject);

    RepetitionPlan other{24, 30};
    RepeatedTestResult d = repeated_ks_procedure(ds, 77, other, 0.05, 0.05);
    CHECK(a.p_values != d.p_values);
}

TEST_CASE("audit bookkeeping is internally consistent") {
    SurveyDataset ds = audit_dataset(0.25, 63);
    RepetitionPlan plan{29, 25};
    RepeatedTestResult r = repeated_ks_procedure(ds, 77, plan, 0.05, 0.05);

    CHECK(r.item_code == 77);
    CHECK(r.sample_size == ds.observations_for(77).size());
    CHECK(r.p_values.size() == 25);
    CHECK(r.ordered_p_values.size() == 25);
    CHECK(r.delta_price.size() == 25);
    CHECK(r.delta_ratio.size() == 25);
    CHECK(r.degenerate.size() == 25);

    std::vector<double> sorted = r.p_values;
    std::sort(sorted.begin(), sorted.end());
    CHECK(r.ordered_p_values == sorted);
    for (double p : r.p_values) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    std::size_t below = 0;
    for (double p : r.p_values) below += p < r.alpha;
    CHECK(r.below_alpha == below);
    bool by_order = r.rank <= r.repetitions &&
                    r.ordered_p_values[static_cast<std::size_t>(r.rank) - 1] < r.alpha;
    CHECK(r.reject == by_order);
    CHECK(r.gamma_price < 0.0);  // demand slopes down in this generator

    // Interval endpoints are order statistics of the recorded vectors.
    auto [lo_rank, hi_rank] = central_ci_ranks(r.delta_price.size());
    std::vector<double> dp = r.delta_price;
    std::sort(dp.begin(), dp.end());
    CHECK(r.delta_price_ci.first == dp[lo_rank - 1]);
    CHECK(r.delta_price_ci.second == dp[hi_rank - 1]);
}

TEST_CASE("the audit validates its inputs") {
    SurveyDataset ds = audit_dataset(0.1, 64);
    RepetitionPlan plan{1, 10};
    CHECK_THROWS_AS(repeated_ks_procedure(ds, 99, plan), DataError);
    CHECK_THROWS_AS(repeated_ks_procedure(ds, 77, {1, 0}), ConfigError);
    CHECK_THROWS_AS(repeated_ks_procedure(ds, 77, plan, 1.5), ConfigError);
    CHECK_THROWS_AS(repeated_ks_procedure(ds, 77, plan, 0.05, 0.0), ConfigError);
    CHECK_THROWS_AS(repeated_ks_procedure(ds, 77, plan, 0.05, 0.05, -1), ConfigError);
}

TEST_CASE("null p-values reject at the advertised meta rate") {
    // The decision rule on independent uniform p-values: counting how often
    // at least c of 1000 fall below alpha recovers the exact binomial tail
    // the rank was calibrated from.
    std::mt19937_64 eng(8181);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int meta_reps = 10000;
    const int reps = 1000;
    const double alpha = 0.05;
    int hits62 = 0;
    int hits63 = 0;
    for (int m = 0; m < meta_reps; ++m) {
        int below = 0;
        for (int r = 0; r < reps; ++r) below += u(eng) < alpha;
        hits62 += below >= 62;
        hits63 += below >= 63;
    }
    double rate62 = static_cast<double>(hits62) / meta_reps;
    double rate63 = static_cast<double>(hits63) / meta_reps;
    CHECK(std::abs(rate62 - binomial_upper_tail(reps, alpha, 62)) <= 0.01);
    CHECK(std::abs(rate63 - binomial_upper_tail(reps, alpha, 63)) <= 0.01);
    CHECK(rate63 <= 0.05 + 0.01);  // the calibrated rank keeps the meta level
}
