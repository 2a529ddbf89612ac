#pragma once

#include <cstdint>
#include <vector>

#include "thinprice/dataset.hpp"

namespace thinprice {

struct GaussianSpec {
    double mean = 0.0;
    double sd = 0.0;
};

// Generator for synthetic surveys with a known demand process:
// log q = sector effect + state effect + g_size*hh_size + g_price*log p
//         + g_expenditure*log mpce + noise.
struct SynthConfig {
    int item_code = 101;
    std::size_t fsu_count = 100;
    int households_per_fsu_min = 6;
    int households_per_fsu_max = 10;
    int state_count = 5;
    double rural_share = 0.6;             // probability an FSU is rural
    double consumption_prob_min = 0.3;    // per-FSU consumption probabilities
    double consumption_prob_max = 0.8;    // drawn uniformly from this range
    GaussianSpec base_log_price{2.5, 0.4};
    double price_jitter_sd = 0.0;         // within-FSU log-price spread
    GaussianSpec log_mpce{7.0, 0.6};
    double household_size_rate = 3.0;     // hh_size = 1 + Poisson(rate)
    double noise_sd = 0.3;

    void validate() const;  // throws ConfigError naming the violated field
};

struct GroundTruth {
    std::vector<double> sector_effects;   // {rural, urban}
    std::vector<double> state_effects;    // state_count entries
    double gamma_size = 0.0;
    double gamma_price = 0.0;
    double gamma_expenditure = 0.0;
    std::vector<double> consumption_probs;  // per FSU; empty = draw from config
};

// Fills consumption_probs (when empty) with uniform draws over the configured
// range, deterministically from the seed.
void fill_consumption_probs(GroundTruth& truth, const SynthConfig& config, std::uint64_t seed);

// Per-FSU consumption probabilities the dataset was generated with.
const std::vector<double>& true_prevalence_probs(const GroundTruth& truth);

// Deterministic in (config, truth, seed); household h of FSU i draws from its
// own derived stream, so regenerating any subset reproduces the whole.
SurveyDataset generate_survey(const SynthConfig& config, const GroundTruth& truth,
                              std::uint64_t seed);

}  // namespace thinprice
