#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thinprice/dataset.hpp"

namespace thinprice {

// One thin-sample draw: for every FSU with at least one household consuming
// the item, a single consuming household chosen uniformly at random.
struct ThinSampleAssignment {
    int item_code = 0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, HouseholdKey>> selections;  // sorted by FSU id
};

ThinSampleAssignment draw_thin_sample(const SurveyDataset& dataset, int item_code,
                                      std::uint64_t seed);

// An observation priced two ways: its own unit price and the unit price of
// the FSU's selected household (the star price imputed to the whole FSU).
struct StarPricedObservation {
    ItemObservation base;
    double actual_price = 0.0;
    double star_price = 0.0;
    double log_price_ratio = 0.0;  // log(star) - log(actual); 0 for the selected household
};

std::vector<StarPricedObservation> assign_star_prices(const SurveyDataset& dataset,
                                                      const ThinSampleAssignment& assignment);

struct RepetitionPlan {
    std::uint64_t master_seed = 0;
    int repetitions = 1000;
};

// Per-repetition seeds derived from the master seed; pairwise distinct (a
// salt is folded in and escalated in the vanishingly unlikely event of a
// collision).
std::vector<std::uint64_t> repetition_seeds(const RepetitionPlan& plan);

}  // namespace thinprice
