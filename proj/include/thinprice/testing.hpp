#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "thinprice/dataset.hpp"
#include "thinprice/sampling.hpp"

namespace thinprice {

struct KsResult {
    double statistic = 0.0;  // sup |F1 - F2| over the pooled sample
    double p_value = 1.0;    // asymptotic, via the Kolmogorov tail series
    std::size_t n1 = 0;
    std::size_t n2 = 0;
};

// Two-sample Kolmogorov-Smirnov with tie-aware ECDF evaluation.
KsResult ks_two_sample(std::span<const double> sample1, std::span<const double> sample2);

// P(sup_t |B(t)| > lambda) for a Brownian bridge: the alternating exponential
// series for large lambda, the theta-function complement for small lambda,
// terms kept until below 1e-12.
double kolmogorov_sf(double lambda);

// Smallest rank c such that P(Binomial(repetitions, alpha) >= c) <= meta_alpha,
// computed from exact log-space binomial tails. Rejecting when the c-th
// smallest of the repetition p-values is below alpha then keeps the
// family-wise error under meta_alpha with all repetitions independent null.
int rejection_rank(int repetitions, double alpha, double meta_alpha);

// Exact upper tail P(Binomial(n, p) >= k), log-space summation.
double binomial_upper_tail(int n, double p, int k);

struct RepeatedTestResult {
    int item_code = 0;
    int repetitions = 0;
    double alpha = 0.0;
    double meta_alpha = 0.0;
    int rank = 0;  // rejection_rank(repetitions, alpha, meta_alpha)

    double gamma_price = 0.0;  // actual-price regression price elasticity
    std::vector<double> p_values;          // per repetition, input order
    std::vector<double> ordered_p_values;  // the same, sorted ascending
    std::vector<double> delta_price;       // star-price coefficient per repetition
    std::vector<double> delta_ratio;       // price-ratio coefficient per repetition
    // Byte flags (not vector<bool>: slots are written from worker threads):
    // ratio column constant, comparison skipped, p-value 1.
    std::vector<std::uint8_t> degenerate;
    std::size_t sample_size = 0;           // design rows per repetition

    std::pair<double, double> delta_price_ci{0.0, 0.0};
    std::pair<double, double> delta_ratio_ci{0.0, 0.0};
    std::size_t below_alpha = 0;  // count of p-values strictly below alpha
    bool reject = false;          // c-th smallest p-value strictly below alpha
};

// The full thin-price audit for one item: fit the actual-price model once,
// then for each repetition draw a thin sample, fit the star-price model and
// compare the two models' predicted share distributions by KS. Deterministic
// in (dataset, plan) regardless of threads.
RepeatedTestResult repeated_ks_procedure(const SurveyDataset& dataset, int item_code,
                                         const RepetitionPlan& plan, double alpha = 0.05,
                                         double meta_alpha = 0.05, int threads = 1);

}  // namespace thinprice
