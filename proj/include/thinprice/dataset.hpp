#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace thinprice {

enum class Sector { rural, urban };

std::string to_string(Sector sector);
std::optional<Sector> parse_sector(std::string_view text);

struct HouseholdKey {
    std::string fsu_id;
    std::string household_id;
    auto operator<=>(const HouseholdKey&) const = default;
};

std::string to_string(const HouseholdKey& key);

struct HouseholdRecord {
    HouseholdKey key;
    Sector sector = Sector::rural;
    std::string state;
    int hh_size = 1;
    double mpce = 0.0;
    bool operator==(const HouseholdRecord&) const = default;
};

struct ItemObservation {
    HouseholdKey key;
    int item_code = 0;
    double quantity = 0.0;
    double value = 0.0;
    bool operator==(const ItemObservation&) const = default;
};

// Price per unit implied by a recorded purchase.
double unit_price(const ItemObservation& obs);

// Immutable survey snapshot. Construction canonicalises order (households by
// key, observations by item then key) and validates: positive quantities,
// values, mpce, hh_size >= 1, no duplicate households or (household, item)
// pairs, every observation attached to a known household, and uniform
// sector/state within each FSU.
class SurveyDataset {
  public:
    SurveyDataset() = default;

    static SurveyDataset build(std::vector<HouseholdRecord> households,
                               std::vector<ItemObservation> observations);

    const std::vector<HouseholdRecord>& households() const { return households_; }
    const std::vector<ItemObservation>& observations() const { return observations_; }

    std::size_t household_count() const { return households_.size(); }
    std::size_t fsu_count() const { return fsu_households_.size(); }

    // Sorted FSU ids over the whole dataset.
    std::vector<std::string> fsu_ids() const;

    // Household indices belonging to one FSU, sorted by key.
    const std::vector<std::size_t>& fsu_households(const std::string& fsu_id) const;

    const HouseholdRecord& household(const HouseholdKey& key) const;
    bool has_household(const HouseholdKey& key) const;

    // Item codes present, ascending.
    std::vector<int> items() const;
    bool has_item(int item_code) const;

    // Contiguous span of one item's observations (canonical order).
    std::span<const ItemObservation> observations_for(int item_code) const;

    // item -> fsu -> indices (into households()) of consuming households.
    using FsuIndex = std::map<int, std::map<std::string, std::vector<std::size_t>>>;
    const FsuIndex& fsu_index() const { return fsu_index_; }

    const std::vector<std::size_t>& consuming_households(int item_code,
                                                         const std::string& fsu_id) const;

    // Observation of (household, item) if recorded.
    const ItemObservation* find_observation(const HouseholdKey& key, int item_code) const;

    bool operator==(const SurveyDataset& other) const {
        return households_ == other.households_ && observations_ == other.observations_;
    }

  private:
    std::vector<HouseholdRecord> households_;
    std::vector<ItemObservation> observations_;
    std::map<std::string, std::vector<std::size_t>> fsu_households_;
    std::map<int, std::pair<std::size_t, std::size_t>> item_spans_;
    FsuIndex fsu_index_;

    std::size_t household_index(const HouseholdKey& key) const;  // npos if absent
    void rebuild_indexes();
};

// Maps the logical column roles onto the header names of a particular file.
struct CsvSchema {
    std::string fsu_id = "fsu_id";
    std::string household_id = "household_id";
    std::string sector = "sector";
    std::string state = "state";
    std::string hh_size = "hh_size";
    std::string mpce = "mpce";
    std::string item_code = "item_code";
    std::string quantity = "quantity";
    std::string value = "value";
};

struct RowIssue {
    std::size_t line_number = 0;  // 1-based, header is line 1
    std::string reason;
};

struct CsvLoadResult {
    SurveyDataset dataset;
    std::vector<RowIssue> dropped_rows;
};

// Reads a survey extract. Malformed or out-of-range rows are dropped and
// reported per row; structural problems (missing columns, duplicate
// (fsu, household, item) rows, conflicting household metadata) throw.
// A row with all three item fields blank declares a household with no
// observation, which keeps non-consumers alive across a round-trip.
CsvLoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

// Canonical-order writer; load_csv(write_csv(ds)) reproduces ds exactly.
void write_csv(const SurveyDataset& dataset, const std::filesystem::path& path,
               const CsvSchema& schema = {});

// Within-FSU price homogeneity: min/max unit-price ratio per FSU among the
// item's consuming households, restricted to FSUs with at least two of them.
// Returned sorted by FSU id; every ratio lies in (0, 1].
std::vector<std::pair<std::string, double>> fsu_price_ratios(const SurveyDataset& dataset,
                                                             int item_code);

inline constexpr int kRatioHistogramBins = 20;

struct ScreeningRules {
    double ratio_threshold = 0.5;  // t, in (0,1)
    double mass_threshold = 0.2;   // m, in (0,1)
    std::set<int> variable_unit_items;
    std::set<int> manual_exclusions;
};

enum class ExclusionReason { none, heterogeneous_prices, variable_units, manual };

std::string to_string(ExclusionReason reason);

struct ItemScreening {
    int item_code = 0;
    std::size_t ratio_count = 0;
    std::vector<std::size_t> bin_counts;  // kRatioHistogramBins bins on (0,1]
    double mass_below_threshold = 0.0;    // fraction of ratios strictly below t
    bool included = true;
    ExclusionReason reason = ExclusionReason::none;
};

struct ScreeningReport {
    ScreeningRules rules;
    std::vector<ItemScreening> items;  // ascending item code, all items present

    const ItemScreening& item(int item_code) const;
    std::vector<int> included_items() const;
};

ScreeningReport screen_items(const SurveyDataset& dataset, const ScreeningRules& rules);

// Budget share (value / hh_size) / mpce; value_override substitutes the
// numerator (used for star-priced predictions).
double household_share(const SurveyDataset& dataset, const HouseholdKey& key, int item_code,
                       std::optional<double> value_override = std::nullopt);

}  // namespace thinprice
