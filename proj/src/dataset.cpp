#include "thinprice/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "thinprice/csv.hpp"
#include "thinprice/errors.hpp"
#include "thinprice/log.hpp"

namespace thinprice {

namespace {

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

std::string to_string(Sector sector) {
    return sector == Sector::rural ? "rural" : "urban";
}

std::optional<Sector> parse_sector(std::string_view text) {
    if (text == "rural" || text == "1") return Sector::rural;
    if (text == "urban" || text == "2") return Sector::urban;
    return std::nullopt;
}

std::string to_string(const HouseholdKey& key) {
    return key.fsu_id + "/" + key.household_id;
}

double unit_price(const ItemObservation& obs) {
    if (!positive_finite(obs.quantity) || !positive_finite(obs.value))
        throw DataError("unit price undefined for household " + to_string(obs.key) + " item " +
                        std::to_string(obs.item_code) + ": quantity and value must be positive");
    return obs.value / obs.quantity;
}

SurveyDataset SurveyDataset::build(std::vector<HouseholdRecord> households,
                                   std::vector<ItemObservation> observations) {
    std::sort(households.begin(), households.end(),
              [](const HouseholdRecord& a, const HouseholdRecord& b) { return a.key < b.key; });
    std::sort(observations.begin(), observations.end(),
              [](const ItemObservation& a, const ItemObservation& b) {
                  if (a.item_code != b.item_code) return a.item_code < b.item_code;
                  return a.key < b.key;
              });

    for (std::size_t i = 0; i < households.size(); ++i) {
        const HouseholdRecord& h = households[i];
        if (h.key.fsu_id.empty() || h.key.household_id.empty())
            throw DataError("household with empty fsu or household id");
        if (h.hh_size < 1)
            throw DataError("household " + to_string(h.key) + ": hh_size must be >= 1");
        if (!positive_finite(h.mpce))
            throw DataError("household " + to_string(h.key) + ": mpce must be positive");
        if (i > 0 && households[i - 1].key == h.key)
            throw DataError("duplicate household " + to_string(h.key));
    }

    SurveyDataset ds;
    ds.households_ = std::move(households);
    ds.observations_ = std::move(observations);

    // FSU membership first, so observation checks can use household lookups.
    for (std::size_t i = 0; i < ds.households_.size(); ++i)
        ds.fsu_households_[ds.households_[i].key.fsu_id].push_back(i);

    for (const auto& [fsu, members] : ds.fsu_households_) {
        const HouseholdRecord& first = ds.households_[members.front()];
        for (std::size_t idx : members) {
            const HouseholdRecord& h = ds.households_[idx];
            if (h.sector != first.sector || h.state != first.state)
                throw DataError("FSU " + fsu + " mixes sector or state across households");
        }
    }

    for (std::size_t i = 0; i < ds.observations_.size(); ++i) {
        const ItemObservation& o = ds.observations_[i];
        if (!positive_finite(o.quantity))
            throw DataError("observation for household " + to_string(o.key) + " item " +
                            std::to_string(o.item_code) + ": quantity must be positive");
        if (!positive_finite(o.value))
            throw DataError("observation for household " + to_string(o.key) + " item " +
                            std::to_string(o.item_code) + ": value must be positive");
        if (ds.household_index(o.key) == ds.households_.size())
            throw DataError("observation references unknown household " + to_string(o.key));
        if (i > 0 && ds.observations_[i - 1].item_code == o.item_code &&
            ds.observations_[i - 1].key == o.key)
            throw DataError("duplicate observation for household " + to_string(o.key) +
                            " item " + std::to_string(o.item_code));
    }

    ds.rebuild_indexes();
    return ds;
}

void SurveyDataset::rebuild_indexes() {
    item_spans_.clear();
    fsu_index_.clear();
    std::size_t begin = 0;
    for (std::size_t i = 0; i <= observations_.size(); ++i) {
        if (i == observations_.size() ||
            (i > begin && observations_[i].item_code != observations_[begin].item_code)) {
            if (i > begin) item_spans_[observations_[begin].item_code] = {begin, i};
            begin = i;
        }
    }
    for (const ItemObservation& o : observations_)
        fsu_index_[o.item_code][o.key.fsu_id].push_back(household_index(o.key));
}

std::size_t SurveyDataset::household_index(const HouseholdKey& key) const {
    auto it = std::lower_bound(
        households_.begin(), households_.end(), key,
        [](const HouseholdRecord& h, const HouseholdKey& k) { return h.key < k; });
    if (it == households_.end() || !(it->key == key)) return households_.size();
    return static_cast<std::size_t>(it - households_.begin());
}

std::vector<std::string> SurveyDataset::fsu_ids() const {
    std::vector<std::string> ids;
    ids.reserve(fsu_households_.size());
    for (const auto& [fsu, members] : fsu_households_) ids.push_back(fsu);
    return ids;
}

const std::vector<std::size_t>& SurveyDataset::fsu_households(const std::string& fsu_id) const {
    auto it = fsu_households_.find(fsu_id);
    if (it == fsu_households_.end()) throw DataError("unknown FSU " + fsu_id);
    return it->second;
}

const HouseholdRecord& SurveyDataset::household(const HouseholdKey& key) const {
    std::size_t idx = household_index(key);
    if (idx == households_.size()) throw DataError("unknown household " + to_string(key));
    return households_[idx];
}

bool SurveyDataset::has_household(const HouseholdKey& key) const {
    return household_index(key) != households_.size();
}

std::vector<int> SurveyDataset::items() const {
    std::vector<int> codes;
    codes.reserve(item_spans_.size());
    for (const auto& [code, span] : item_spans_) codes.push_back(code);
    return codes;
}

bool SurveyDataset::has_item(int item_code) const {
    return item_spans_.count(item_code) != 0;
}

std::span<const ItemObservation> SurveyDataset::observations_for(int item_code) const {
    auto it = item_spans_.find(item_code);
    if (it == item_spans_.end())
        throw DataError("no observations for item " + std::to_string(item_code));
    return {observations_.data() + it->second.first, it->second.second - it->second.first};
}

const std::vector<std::size_t>& SurveyDataset::consuming_households(
    int item_code, const std::string& fsu_id) const {
    auto it = fsu_index_.find(item_code);
    if (it == fsu_index_.end())
        throw DataError("no observations for item " + std::to_string(item_code));
    auto fit = it->second.find(fsu_id);
    if (fit == it->second.end())
        throw DataError("FSU " + fsu_id + " has no consuming household for item " +
                        std::to_string(item_code));
    return fit->second;
}

const ItemObservation* SurveyDataset::find_observation(const HouseholdKey& key,
                                                       int item_code) const {
    auto it = item_spans_.find(item_code);
    if (it == item_spans_.end()) return nullptr;
    auto begin = observations_.begin() + static_cast<std::ptrdiff_t>(it->second.first);
    auto end = observations_.begin() + static_cast<std::ptrdiff_t>(it->second.second);
    auto pos = std::lower_bound(begin, end, key,
                                [](const ItemObservation& o, const HouseholdKey& k) {
                                    return o.key < k;
                                });
    if (pos == end || !(pos->key == key)) return nullptr;
    return &*pos;
}

namespace {

struct ColumnMap {
    std::size_t fsu_id, household_id, sector, state, hh_size, mpce, item_code, quantity, value;
};

std::size_t require_column(const std::vector<std::string>& header, const std::string& name,
                           const std::filesystem::path& path) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw DataError("column '" + name + "' not found in header of " + path.string());
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

CsvLoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file " + path.string());
    std::vector<std::string> header = csv::split_line(line);
    ColumnMap col{
        require_column(header, schema.fsu_id, path),
        require_column(header, schema.household_id, path),
        require_column(header, schema.sector, path),
        require_column(header, schema.state, path),
        require_column(header, schema.hh_size, path),
        require_column(header, schema.mpce, path),
        require_column(header, schema.item_code, path),
        require_column(header, schema.quantity, path),
        require_column(header, schema.value, path),
    };

    CsvLoadResult result;
    std::map<HouseholdKey, HouseholdRecord> households;
    std::set<std::pair<HouseholdKey, int>> seen_obs;
    std::vector<ItemObservation> observations;

    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        std::vector<std::string> fields = csv::split_line(line);
        if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
        auto drop = [&](const std::string& reason) {
            result.dropped_rows.push_back({line_number, reason});
            log::info("dropping line " + std::to_string(line_number) + ": " + reason);
        };
        if (fields.size() != header.size()) {
            drop("expected " + std::to_string(header.size()) + " fields, found " +
                 std::to_string(fields.size()));
            continue;
        }

        HouseholdRecord rec;
        rec.key = {fields[col.fsu_id], fields[col.household_id]};
        if (rec.key.fsu_id.empty() || rec.key.household_id.empty()) {
            drop("missing fsu or household id");
            continue;
        }
        std::optional<Sector> sector = parse_sector(fields[col.sector]);
        if (!sector) {
            drop("unrecognised sector '" + fields[col.sector] + "'");
            continue;
        }
        rec.sector = *sector;
        rec.state = fields[col.state];
        if (rec.state.empty()) {
            drop("missing state");
            continue;
        }
        std::optional<long long> hh_size = csv::parse_int(fields[col.hh_size]);
        if (!hh_size || *hh_size < 1) {
            drop("hh_size must be an integer >= 1, got '" + fields[col.hh_size] + "'");
            continue;
        }
        rec.hh_size = static_cast<int>(*hh_size);
        std::optional<double> mpce = csv::parse_double(fields[col.mpce]);
        if (!mpce) {
            drop("unparseable mpce '" + fields[col.mpce] + "'");
            continue;
        }
        if (!positive_finite(*mpce)) {
            drop("non-positive mpce");
            continue;
        }
        rec.mpce = *mpce;

        const std::string& item_field = fields[col.item_code];
        const std::string& qty_field = fields[col.quantity];
        const std::string& value_field = fields[col.value];
        bool blank_item = item_field.empty() && qty_field.empty() && value_field.empty();

        ItemObservation obs;
        if (!blank_item) {
            std::optional<long long> item = csv::parse_int(item_field);
            if (!item) {
                drop("item_code must be an integer, got '" + item_field + "'");
                continue;
            }
            std::optional<double> qty = csv::parse_double(qty_field);
            if (!qty) {
                drop("unparseable quantity '" + qty_field + "'");
                continue;
            }
            if (!positive_finite(*qty)) {
                drop("non-positive quantity");
                continue;
            }
            std::optional<double> value = csv::parse_double(value_field);
            if (!value) {
                drop("unparseable value '" + value_field + "'");
                continue;
            }
            if (!positive_finite(*value)) {
                drop("non-positive value");
                continue;
            }
            obs = {rec.key, static_cast<int>(*item), *qty, *value};
        }

        auto [it, inserted] = households.emplace(rec.key, rec);
        if (!inserted && !(it->second == rec))
            throw DataError("conflicting metadata for household " + to_string(rec.key) +
                            " at line " + std::to_string(line_number));
        if (!blank_item) {
            if (!seen_obs.emplace(obs.key, obs.item_code).second)
                throw DataError("duplicate observation for household " + to_string(obs.key) +
                                " item " + std::to_string(obs.item_code) + " at line " +
                                std::to_string(line_number));
            observations.push_back(obs);
        }
    }

    std::vector<HouseholdRecord> household_list;
    household_list.reserve(households.size());
    for (auto& [key, rec] : households) household_list.push_back(std::move(rec));
    result.dataset = SurveyDataset::build(std::move(household_list), std::move(observations));
    return result;
}

void write_csv(const SurveyDataset& dataset, const std::filesystem::path& path,
               const CsvSchema& schema) {
    std::ostringstream out;
    out << schema.fsu_id << ',' << schema.household_id << ',' << schema.sector << ','
        << schema.state << ',' << schema.hh_size << ',' << schema.mpce << ','
        << schema.item_code << ',' << schema.quantity << ',' << schema.value << '\n';

    // Group observation indices per household so each household's rows come
    // out together, items ascending; households without observations get one
    // blank-item row so they survive a round-trip.
    std::map<HouseholdKey, std::vector<const ItemObservation*>> by_household;
    for (const ItemObservation& o : dataset.observations()) by_household[o.key].push_back(&o);

    for (const HouseholdRecord& h : dataset.households()) {
        std::string prefix = h.key.fsu_id + ',' + h.key.household_id + ',' + to_string(h.sector) +
                             ',' + h.state + ',' + std::to_string(h.hh_size) + ',' +
                             csv::format_double(h.mpce) + ',';
        auto it = by_household.find(h.key);
        if (it == by_household.end()) {
            out << prefix << ",,\n";
            continue;
        }
        std::vector<const ItemObservation*>& obs = it->second;
        std::sort(obs.begin(), obs.end(), [](const ItemObservation* a, const ItemObservation* b) {
            return a->item_code < b->item_code;
        });
        for (const ItemObservation* o : obs)
            out << prefix << o->item_code << ',' << csv::format_double(o->quantity) << ','
                << csv::format_double(o->value) << '\n';
    }

    std::ofstream file(path);
    if (!file) throw DataError("cannot write " + path.string());
    file << out.str();
    if (!file.flush()) throw DataError("failed writing " + path.string());
}

std::vector<std::pair<std::string, double>> fsu_price_ratios(const SurveyDataset& dataset,
                                                             int item_code) {
    std::span<const ItemObservation> obs = dataset.observations_for(item_code);
    std::vector<std::pair<std::string, double>> ratios;
    std::size_t i = 0;
    while (i < obs.size()) {
        std::size_t j = i;
        double lo = unit_price(obs[i]);
        double hi = lo;
        while (j + 1 < obs.size() && obs[j + 1].key.fsu_id == obs[i].key.fsu_id) {
            ++j;
            double p = unit_price(obs[j]);
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        if (j > i) ratios.emplace_back(obs[i].key.fsu_id, lo / hi);
        i = j + 1;
    }
    return ratios;
}

std::string to_string(ExclusionReason reason) {
    switch (reason) {
        case ExclusionReason::none: return "none";
        case ExclusionReason::heterogeneous_prices: return "heterogeneous_prices";
        case ExclusionReason::variable_units: return "variable_units";
        case ExclusionReason::manual: return "manual";
    }
    return "?";
}

const ItemScreening& ScreeningReport::item(int item_code) const {
    for (const ItemScreening& s : items)
        if (s.item_code == item_code) return s;
    throw DataError("item " + std::to_string(item_code) + " not in screening report");
}

std::vector<int> ScreeningReport::included_items() const {
    std::vector<int> codes;
    for (const ItemScreening& s : items)
        if (s.included) codes.push_back(s.item_code);
    return codes;
}

ScreeningReport screen_items(const SurveyDataset& dataset, const ScreeningRules& rules) {
    if (!(rules.ratio_threshold > 0.0 && rules.ratio_threshold < 1.0))
        throw ConfigError("screening ratio_threshold must lie in (0,1)");
    if (!(rules.mass_threshold > 0.0 && rules.mass_threshold < 1.0))
        throw ConfigError("screening mass_threshold must lie in (0,1)");

    ScreeningReport report;
    report.rules = rules;
    for (int code : dataset.items()) {
        ItemScreening s;
        s.item_code = code;
        s.bin_counts.assign(kRatioHistogramBins, 0);
        std::size_t below = 0;
        for (const auto& [fsu, ratio] : fsu_price_ratios(dataset, code)) {
            ++s.ratio_count;
            if (ratio < rules.ratio_threshold) ++below;
            // Ratios live in (0,1]; bin k covers (k/B, (k+1)/B].
            int bin = static_cast<int>(
                          std::ceil(ratio * kRatioHistogramBins - 1e-12)) - 1;
            bin = std::clamp(bin, 0, kRatioHistogramBins - 1);
            ++s.bin_counts[static_cast<std::size_t>(bin)];
        }
        s.mass_below_threshold =
            s.ratio_count == 0 ? 0.0 : static_cast<double>(below) / s.ratio_count;

        if (rules.manual_exclusions.count(code)) {
            s.included = false;
            s.reason = ExclusionReason::manual;
        } else if (rules.variable_unit_items.count(code)) {
            s.included = false;
            s.reason = ExclusionReason::variable_units;
        } else if (s.mass_below_threshold > rules.mass_threshold) {
            s.included = false;
            s.reason = ExclusionReason::heterogeneous_prices;
        }
        report.items.push_back(std::move(s));
    }
    return report;
}

double household_share(const SurveyDataset& dataset, const HouseholdKey& key, int item_code,
                       std::optional<double> value_override) {
    const HouseholdRecord& h = dataset.household(key);
    double value;
    if (value_override) {
        value = *value_override;
        if (!(std::isfinite(value) && value >= 0.0))
            throw DataError("value override for household " + to_string(key) +
                            " must be finite and non-negative");
    } else {
        const ItemObservation* obs = dataset.find_observation(key, item_code);
        if (obs == nullptr)
            throw DataError("household " + to_string(key) + " has no observation of item " +
                            std::to_string(item_code));
        value = obs->value;
    }
    return (value / h.hh_size) / h.mpce;
}

}  // namespace thinprice
