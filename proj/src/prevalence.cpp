#include "thinprice/prevalence.hpp"

#include <algorithm>
#include <cmath>

#include "thinprice/errors.hpp"

namespace thinprice {

namespace {

void check_probs(const std::vector<double>& probs) {
    if (probs.empty()) throw DataError("prevalence: probability vector is empty");
    for (double p : probs)
        if (!(p >= 0.0 && p <= 1.0))
            throw DataError("prevalence: probabilities must lie in [0,1]");
}

void check_q(double q) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("prevalence: q must lie in (0,1)");
}

}  // namespace

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

FsuProbEstimate estimate_fsu_probs(const SurveyDataset& dataset, int item_code) {
    if (!dataset.has_item(item_code))
        throw DataError("no observations for item " + std::to_string(item_code));
    const auto& per_fsu = dataset.fsu_index().at(item_code);
    FsuProbEstimate est;
    for (const std::string& fsu : dataset.fsu_ids()) {
        std::size_t members = dataset.fsu_households(fsu).size();
        auto it = per_fsu.find(fsu);
        std::size_t consuming = it == per_fsu.end() ? 0 : it->second.size();
        est.fsu_ids.push_back(fsu);
        est.probs.push_back(static_cast<double>(consuming) / static_cast<double>(members));
    }
    return est;
}

std::vector<double> exact_pmf(const std::vector<double>& probs, std::size_t cap) {
    check_probs(probs);
    if (probs.size() > cap)
        throw DataError("exact distribution refused for " + std::to_string(probs.size()) +
                        " trials (cap " + std::to_string(cap) +
                        "); use the normal approximation (prevalence_approx)");

    // Convolve one Bernoulli at a time: after trial i, pmf[k] holds
    // P(k of the first i trials succeed). Each update is a convex
    // combination, so masses stay non-negative by construction.
    std::vector<double> pmf(probs.size() + 1, 0.0);
    pmf[0] = 1.0;
    std::size_t upto = 0;
    for (double p : probs) {
        ++upto;
        for (std::size_t k = upto; k-- > 0;) pmf[k + 1] = (1.0 - p) * pmf[k + 1] + p * pmf[k];
        pmf[0] *= 1.0 - p;
    }
    long double total = 0.0L;
    for (double mass : pmf) total += mass;
    if (std::abs(static_cast<double>(total) - 1.0) > 1e-12)
        throw NumericalError("exact pmf does not normalise: sum deviates by " +
                             std::to_string(static_cast<double>(total) - 1.0));
    return pmf;
}

std::size_t prevalence_threshold(std::size_t n, double q) {
    double k = std::ceil(static_cast<double>(n) * q - 1e-9);
    if (k < 0.0) k = 0.0;
    return static_cast<std::size_t>(k);
}

double prevalence_exact(const std::vector<double>& probs, double q, std::size_t cap) {
    check_q(q);
    std::vector<double> pmf = exact_pmf(probs, cap);
    std::size_t k = prevalence_threshold(probs.size(), q);
    double tail = 0.0;
    for (std::size_t j = pmf.size(); j-- > k;) tail += pmf[j];
    return std::min(tail, 1.0);
}

double prevalence_approx(const std::vector<double>& probs, double q) {
    check_q(q);
    check_probs(probs);
    double mean = 0.0;
    double var = 0.0;
    for (double p : probs) {
        mean += p;
        var += p * (1.0 - p);
    }
    if (var <= 0.0)
        throw DataError(
            "prevalence: approximation undefined when every probability is 0 or 1; "
            "use prevalence_exact");
    double threshold = static_cast<double>(probs.size()) * q;
    double z = (threshold - mean) / std::sqrt(var);
    return 1.0 - normal_cdf(z);
}

double lyapunov_diagnostic(const std::vector<double>& probs) {
    check_probs(probs);
    double var = 0.0;
    for (double p : probs) var += p * (1.0 - p);
    if (var <= 0.0)
        throw DataError(
            "prevalence: diagnostic undefined when every probability is 0 or 1; "
            "use prevalence_exact");
    return 1.0 / std::sqrt(var);
}

}  // namespace thinprice
