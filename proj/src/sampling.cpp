#include "thinprice/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "thinprice/errors.hpp"
#include "thinprice/rng.hpp"

namespace thinprice {

ThinSampleAssignment draw_thin_sample(const SurveyDataset& dataset, int item_code,
                                      std::uint64_t seed) {
    auto it = dataset.fsu_index().find(item_code);
    if (it == dataset.fsu_index().end())
        throw DataError("no observations for item " + std::to_string(item_code));

    ThinSampleAssignment assignment;
    assignment.item_code = item_code;
    assignment.seed = seed;
    // Each FSU draws from its own derived stream, keyed by its position in
    // the item's (sorted) FSU list, so the draw for one FSU does not depend
    // on how many candidates any other FSU has.
    std::uint64_t ordinal = 0;
    for (const auto& [fsu, candidates] : it->second) {
        std::mt19937_64 rng = make_engine(seed, {stream::thin_sample, ordinal++});
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        std::size_t chosen = candidates[pick(rng)];
        assignment.selections.emplace_back(fsu, dataset.households()[chosen].key);
    }
    return assignment;
}

std::vector<StarPricedObservation> assign_star_prices(const SurveyDataset& dataset,
                                                      const ThinSampleAssignment& assignment) {
    std::map<std::string, double> star_price;
    for (const auto& [fsu, key] : assignment.selections) {
        const ItemObservation* obs = dataset.find_observation(key, assignment.item_code);
        if (obs == nullptr)
            throw DataError("thin-sample selection " + to_string(key) +
                            " has no observation of item " +
                            std::to_string(assignment.item_code));
        if (key.fsu_id != fsu)
            throw DataError("thin-sample selection " + to_string(key) +
                            " does not belong to FSU " + fsu);
        if (!star_price.emplace(fsu, unit_price(*obs)).second)
            throw DataError("thin-sample assignment selects FSU " + fsu + " twice");
    }

    std::vector<StarPricedObservation> out;
    auto span = dataset.observations_for(assignment.item_code);
    out.reserve(span.size());
    for (const ItemObservation& obs : span) {
        auto it = star_price.find(obs.key.fsu_id);
        if (it == star_price.end())
            throw DataError("thin-sample assignment misses FSU " + obs.key.fsu_id +
                            " for item " + std::to_string(assignment.item_code));
        StarPricedObservation s;
        s.base = obs;
        s.actual_price = unit_price(obs);
        s.star_price = it->second;
        // Identical doubles cancel exactly, so the selected household (and
        // every household of a price-homogeneous FSU) gets a ratio of 0.
        s.log_price_ratio = std::log(s.star_price) - std::log(s.actual_price);
        out.push_back(s);
    }
    return out;
}

std::vector<std::uint64_t> repetition_seeds(const RepetitionPlan& plan) {
    if (plan.repetitions < 1) throw ConfigError("repetitions must be >= 1");
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(plan.repetitions));
    for (std::uint64_t salt = 0;; ++salt) {
        for (std::size_t r = 0; r < seeds.size(); ++r)
            seeds[r] = derive_seed(plan.master_seed, {stream::repetition, salt, r});
        std::unordered_set<std::uint64_t> unique(seeds.begin(), seeds.end());
        if (unique.size() == seeds.size()) return seeds;
        if (salt == 64)
            throw NumericalError("could not derive distinct repetition seeds");
    }
}

}  // namespace thinprice
