#pragma once

#include <cstddef>
#include <vector>

#include "thinprice/dataset.hpp"

namespace thinprice {

// Number of independent non-identical Bernoulli trials (one per FSU) above
// which the exact distribution is refused in favour of the approximation.
inline constexpr std::size_t kExactPmfCap = 20000;

// Phi(z) evaluated as erfc(-z/sqrt(2))/2, stable in both tails.
double normal_cdf(double z);

// Per-FSU consumption probabilities: share of the FSU's households with an
// observation of the item, ordered by FSU id over every FSU in the dataset.
struct FsuProbEstimate {
    std::vector<std::string> fsu_ids;
    std::vector<double> probs;
};

FsuProbEstimate estimate_fsu_probs(const SurveyDataset& dataset, int item_code);

// Exact distribution of the number of consuming FSUs: dynamic-programming
// convolution of Bernoulli(p_i). pmf has size N+1 and sums to 1 within 1e-12.
std::vector<double> exact_pmf(const std::vector<double>& probs,
                              std::size_t cap = kExactPmfCap);

// P(at least ceil(N q) of N FSUs consume), exactly and by the normal
// approximation with mean sum p_i and variance sum p_i (1 - p_i).
double prevalence_exact(const std::vector<double>& probs, double q,
                        std::size_t cap = kExactPmfCap);
double prevalence_approx(const std::vector<double>& probs, double q);

// Upper bound on the normal-approximation error, 1/sqrt(sum p_i (1 - p_i));
// small values certify the approximation.
double lyapunov_diagnostic(const std::vector<double>& probs);

// Threshold count for "prevalence at least q": smallest integer >= N q, with
// a guard so that N q already integral (up to fp slop) is not rounded up.
std::size_t prevalence_threshold(std::size_t n, double q);

}  // namespace thinprice
