#include "thinprice/testing.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

#include "thinprice/errors.hpp"
#include "thinprice/inference.hpp"

namespace thinprice {

double kolmogorov_sf(double lambda) {
    if (!(lambda > 0.0)) return 1.0;
    constexpr double kTermFloor = 1e-12;
    double sum = 0.0;
    if (lambda < 1.0) {
        // Small-lambda theta form converges fast where the alternating
        // series would not; return 1 minus the cdf.
        constexpr double pi = std::numbers::pi;
        double a = -(pi * pi) / (8.0 * lambda * lambda);
        for (int k = 1;; ++k) {
            double odd = 2.0 * k - 1.0;
            double term = std::exp(a * odd * odd);
            sum += term;
            if (term < kTermFloor) break;
        }
        double cdf = std::sqrt(2.0 * pi) / lambda * sum;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    for (int k = 1;; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < kTermFloor) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> sample1, std::span<const double> sample2) {
    if (sample1.empty() || sample2.empty())
        throw DataError("KS test requires two non-empty samples");
    std::vector<double> s1(sample1.begin(), sample1.end());
    std::vector<double> s2(sample2.begin(), sample2.end());
    std::sort(s1.begin(), s1.end());
    std::sort(s2.begin(), s2.end());

    // Walk the pooled values; after consuming every copy of a value from
    // both samples the ECDF difference at that value is exact under ties.
    const std::size_t n1 = s1.size();
    const std::size_t n2 = s2.size();
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < n1 || j < n2) {
        double t = j >= n2 || (i < n1 && s1[i] <= s2[j]) ? s1[i] : s2[j];
        while (i < n1 && s1[i] == t) ++i;
        while (j < n2 && s2[j] == t) ++j;
        double gap = std::abs(static_cast<double>(i) / static_cast<double>(n1) -
                              static_cast<double>(j) / static_cast<double>(n2));
        d = std::max(d, gap);
    }

    KsResult result;
    result.statistic = d;
    result.n1 = n1;
    result.n2 = n2;
    double effective = static_cast<double>(n1) * static_cast<double>(n2) /
                       static_cast<double>(n1 + n2);
    result.p_value = kolmogorov_sf(d * std::sqrt(effective));
    return result;
}

namespace {

double binomial_log_pmf(int n, double p, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
           k * std::log(p) + (n - k) * std::log1p(-p);
}

}  // namespace

double binomial_upper_tail(int n, double p, int k) {
    if (n < 0 || !(p > 0.0 && p < 1.0)) throw ConfigError("binomial tail: need n >= 0, p in (0,1)");
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    double tail = 0.0;  // summed outward-in so small terms accumulate first
    for (int j = n; j >= k; --j) tail += std::exp(binomial_log_pmf(n, p, j));
    return std::min(tail, 1.0);
}

int rejection_rank(int repetitions, double alpha, double meta_alpha) {
    if (repetitions < 1) throw ConfigError("rejection rank: repetitions must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("rejection rank: alpha must lie in (0,1)");
    if (!(meta_alpha > 0.0 && meta_alpha < 1.0))
        throw ConfigError("rejection rank: meta_alpha must lie in (0,1)");
    // Smallest c with P(Bin(repetitions, alpha) >= c) <= meta_alpha: descend
    // until the accumulated upper tail first exceeds meta_alpha.
    double tail = 0.0;
    for (int c = repetitions; c >= 0; --c) {
        tail += std::exp(binomial_log_pmf(repetitions, alpha, c));
        if (tail > meta_alpha) return c + 1;
    }
    return 0;  // unreachable: the full tail is 1 > meta_alpha
}

RepeatedTestResult repeated_ks_procedure(const SurveyDataset& dataset, int item_code,
                                         const RepetitionPlan& plan, double alpha,
                                         double meta_alpha, int threads) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(meta_alpha > 0.0 && meta_alpha < 1.0))
        throw ConfigError("meta_alpha must lie in (0,1)");
    if (threads < 0) throw ConfigError("threads must be >= 0 (0 means one worker)");

    ModelSpec actual_spec{ModelKind::actual_price, std::nullopt, std::nullopt};
    DesignMatrix actual_design = build_design(dataset, item_code, actual_spec);
    FitResult actual_fit = ols_fit(actual_design);
    std::vector<double> actual_shares =
        predicted_shares(actual_fit, dataset, item_code, PriceChoice::actual);

    std::vector<std::uint64_t> seeds = repetition_seeds(plan);
    const std::size_t reps = seeds.size();

    RepeatedTestResult result;
    result.item_code = item_code;
    result.repetitions = plan.repetitions;
    result.alpha = alpha;
    result.meta_alpha = meta_alpha;
    result.rank = rejection_rank(plan.repetitions, alpha, meta_alpha);
    result.gamma_price = actual_fit.coefficient_or("log_price", 0.0);
    result.sample_size = actual_fit.rows.size();
    result.p_values.assign(reps, 1.0);
    result.delta_price.assign(reps, 0.0);
    result.delta_ratio.assign(reps, 0.0);
    result.degenerate.assign(reps, false);

    ModelSpec star_spec{ModelKind::star_price_decomposed, std::nullopt, std::nullopt};
    auto run_one = [&](std::size_t r) {
        ThinSampleAssignment assignment = draw_thin_sample(dataset, item_code, seeds[r]);
        std::vector<StarPricedObservation> star = assign_star_prices(dataset, assignment);
        DesignMatrix design = build_design(dataset, item_code, star_spec, &star);
        FitResult fit = ols_fit(design);
        result.delta_price[r] = fit.coefficient_or("log_price", 0.0);
        if (fit.column_index("log_price_ratio") < 0) {
            // Constant ratio column means star prices match actual prices
            // everywhere; the two models coincide and carry no evidence.
            result.degenerate[r] = 1;
            return;
        }
        result.delta_ratio[r] = fit.coefficient("log_price_ratio");
        std::vector<double> star_shares =
            predicted_shares(fit, dataset, item_code, PriceChoice::star);
        result.p_values[r] = ks_two_sample(actual_shares, star_shares).p_value;
    };

    int worker_count = std::clamp<int>(threads, 1, static_cast<int>(reps));
    if (worker_count <= 1) {
        for (std::size_t r = 0; r < reps; ++r) run_one(r);
    } else {
        // Preassigned slots make the outcome independent of scheduling.
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(worker_count));
        for (int w = 0; w < worker_count; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t r = static_cast<std::size_t>(w); r < reps;
                         r += static_cast<std::size_t>(worker_count))
                        run_one(r);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (std::thread& t : workers) t.join();
        for (const std::exception_ptr& e : errors)
            if (e) std::rethrow_exception(e);
    }

    for (double p : result.p_values)
        if (p < alpha) ++result.below_alpha;
    result.ordered_p_values = result.p_values;
    std::sort(result.ordered_p_values.begin(), result.ordered_p_values.end());
    result.reject = result.rank <= plan.repetitions &&
                    result.ordered_p_values[static_cast<std::size_t>(result.rank) - 1] < alpha;

    auto [lo, hi] = central_ci_ranks(reps);
    result.delta_price_ci = empirical_ci(result.delta_price, lo, hi);
    result.delta_ratio_ci = empirical_ci(result.delta_ratio, lo, hi);
    return result;
}

}  // namespace thinprice
