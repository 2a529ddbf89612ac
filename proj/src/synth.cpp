#include "thinprice/synth.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "thinprice/errors.hpp"
#include "thinprice/rng.hpp"

namespace thinprice {

namespace {

// std::normal_distribution requires sd > 0; a zero spread means the value is
// deterministic and must not consume engine state it never needed.
double draw_normal(std::mt19937_64& rng, double mean, double sd) {
    if (sd <= 0.0) return mean;
    return std::normal_distribution<double>(mean, sd)(rng);
}

// Rounding can make value/quantity land one ulp away from the price used to
// build it, which would break bit-exact price recovery within homogeneous
// FSUs. Stepping quantity by ulps reshuffles the roundings until the stored
// pair reproduces the price exactly; the perturbation is ~1e-16 relative.
std::pair<double, double> exact_price_pair(double price, double quantity) {
    double value = price * quantity;
    for (int k = 0; k < 64 && value / quantity != price; ++k) {
        quantity = std::nextafter(quantity, std::numeric_limits<double>::infinity());
        value = price * quantity;
    }
    return {quantity, value};
}

std::string padded_id(char prefix, std::size_t value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, std::min(width, 20), value);
    return buf;
}

int digits_for(std::size_t n) {
    int d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

}  // namespace

void SynthConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("synth config: " + msg); };
    if (fsu_count < 1) fail("fsu_count must be >= 1");
    if (households_per_fsu_min < 1) fail("households_per_fsu_min must be >= 1");
    if (households_per_fsu_max < households_per_fsu_min)
        fail("households_per_fsu_max must be >= households_per_fsu_min");
    if (state_count < 1) fail("state_count must be >= 1");
    if (!(rural_share >= 0.0 && rural_share <= 1.0)) fail("rural_share must lie in [0,1]");
    if (!(consumption_prob_min > 0.0 && consumption_prob_min <= consumption_prob_max &&
          consumption_prob_max < 1.0))
        fail("consumption probabilities must satisfy 0 < min <= max < 1");
    if (!(base_log_price.sd >= 0.0)) fail("base_log_price.sd must be >= 0");
    if (!(price_jitter_sd >= 0.0)) fail("price_jitter_sd must be >= 0");
    if (!(log_mpce.sd >= 0.0)) fail("log_mpce.sd must be >= 0");
    if (!(household_size_rate >= 0.0)) fail("household_size_rate must be >= 0");
    if (!(noise_sd >= 0.0)) fail("noise_sd must be >= 0");
}

void fill_consumption_probs(GroundTruth& truth, const SynthConfig& config, std::uint64_t seed) {
    if (!truth.consumption_probs.empty()) return;
    std::mt19937_64 rng = make_engine(seed, {stream::synth_probs});
    std::uniform_real_distribution<double> dist(config.consumption_prob_min,
                                                config.consumption_prob_max);
    truth.consumption_probs.resize(config.fsu_count);
    for (double& p : truth.consumption_probs) p = dist(rng);
}

const std::vector<double>& true_prevalence_probs(const GroundTruth& truth) {
    return truth.consumption_probs;
}

SurveyDataset generate_survey(const SynthConfig& config, const GroundTruth& truth,
                              std::uint64_t seed) {
    config.validate();
    if (truth.sector_effects.size() != 2)
        throw ConfigError("ground truth: sector_effects must have 2 entries (rural, urban)");
    if (truth.state_effects.size() != static_cast<std::size_t>(config.state_count))
        throw ConfigError("ground truth: state_effects must have one entry per state");
    if (truth.consumption_probs.size() != config.fsu_count)
        throw ConfigError("ground truth: consumption_probs must have one entry per FSU");
    for (double p : truth.consumption_probs)
        if (!(p >= 0.0 && p <= 1.0))
            throw ConfigError("ground truth: consumption probabilities must lie in [0,1]");

    const int fsu_width = digits_for(config.fsu_count - 1);
    const int hh_width = digits_for(static_cast<std::size_t>(config.households_per_fsu_max - 1));

    std::vector<HouseholdRecord> households;
    std::vector<ItemObservation> observations;

    for (std::size_t i = 0; i < config.fsu_count; ++i) {
        std::mt19937_64 fsu_rng = make_engine(seed, {stream::synth_fsu, i});
        std::uniform_int_distribution<int> size_dist(config.households_per_fsu_min,
                                                     config.households_per_fsu_max);
        int n_households = size_dist(fsu_rng);
        bool rural = std::uniform_real_distribution<double>(0.0, 1.0)(fsu_rng) <
                     config.rural_share;
        int state = std::uniform_int_distribution<int>(0, config.state_count - 1)(fsu_rng);
        double base_log_price =
            draw_normal(fsu_rng, config.base_log_price.mean, config.base_log_price.sd);

        std::string fsu_id = padded_id('F', i, fsu_width);
        double sector_effect = truth.sector_effects[rural ? 0 : 1];
        double state_effect = truth.state_effects[static_cast<std::size_t>(state)];

        for (int h = 0; h < n_households; ++h) {
            std::mt19937_64 rng =
                make_engine(seed, {stream::synth_household, i, static_cast<std::uint64_t>(h)});
            bool consumes = std::uniform_real_distribution<double>(0.0, 1.0)(rng) <
                            truth.consumption_probs[i];
            double log_price = base_log_price + draw_normal(rng, 0.0, config.price_jitter_sd);
            int hh_size = 1;
            if (config.household_size_rate > 0.0)
                hh_size += std::poisson_distribution<int>(config.household_size_rate)(rng);
            double mpce =
                std::exp(draw_normal(rng, config.log_mpce.mean, config.log_mpce.sd));

            HouseholdRecord rec;
            rec.key = {fsu_id, padded_id('H', static_cast<std::size_t>(h), hh_width)};
            rec.sector = rural ? Sector::rural : Sector::urban;
            rec.state = std::to_string(state);
            rec.hh_size = hh_size;
            rec.mpce = mpce;
            households.push_back(rec);

            if (!consumes) continue;
            double noise = draw_normal(rng, 0.0, config.noise_sd);
            double log_q = sector_effect + state_effect + truth.gamma_size * hh_size +
                           truth.gamma_price * log_price +
                           truth.gamma_expenditure * std::log(mpce) + noise;
            auto [quantity, value] = exact_price_pair(std::exp(log_price), std::exp(log_q));
            observations.push_back({rec.key, config.item_code, quantity, value});
        }
    }
    return SurveyDataset::build(std::move(households), std::move(observations));
}

}  // namespace thinprice
