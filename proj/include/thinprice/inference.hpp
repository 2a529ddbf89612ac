#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "thinprice/dataset.hpp"
#include "thinprice/sampling.hpp"

namespace thinprice {

// Solves with condition numbers above this are refused as singular.
inline constexpr double kConditionCap = 1e12;

enum class ModelKind {
    actual_price,          // log q on sector/state dummies, hh_size, log p, log mpce
    star_price_decomposed  // same but log p* and the log price ratio as a regressor
};

enum class PriceChoice { actual, star };

struct ModelSpec {
    ModelKind kind = ModelKind::actual_price;
    // Reference (dropped) dummy levels; defaults: rural if present, else
    // urban, and the lexicographically first state among the design rows.
    std::optional<Sector> sector_reference;
    std::optional<std::string> state_reference;
};

struct DroppedColumn {
    std::string name;
    std::string reason;
};

struct DesignRow {
    std::size_t observation_index = 0;  // into dataset.observations()
    double star_price = 0.0;            // 0 when the model has no star price
};

struct DesignMatrix {
    int item_code = 0;
    ModelKind kind = ModelKind::actual_price;
    std::vector<std::string> column_names;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;  // log quantity
    std::vector<DesignRow> rows;
    std::vector<DroppedColumn> dropped_columns;

    int column_index(std::string_view name) const;  // -1 if absent
};

// One row per observation of the item, canonical row order. Dummy columns
// drop the reference level, constant columns are pruned (recorded in
// dropped_columns), and a rank-deficient result throws naming the dependent
// columns. star observations must match the item's observations one-to-one.
DesignMatrix build_design(const SurveyDataset& dataset, int item_code, const ModelSpec& spec,
                          const std::vector<StarPricedObservation>* star = nullptr);

struct FitResult {
    int item_code = 0;
    ModelKind kind = ModelKind::actual_price;
    std::vector<std::string> column_names;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd gram;  // X'X
    Eigen::VectorXd xty;   // X'y
    double condition = 0.0;
    std::vector<DesignRow> rows;
    std::vector<DroppedColumn> dropped_columns;

    int column_index(std::string_view name) const;
    double coefficient(std::string_view name) const;  // throws DataError if absent
    double coefficient_or(std::string_view name, double fallback) const;
};

// Least squares via column-pivoted Householder QR; condition estimated from
// the R factor's singular values and capped at kConditionCap.
FitResult ols_fit(const DesignMatrix& design);

struct MeasurementErrorInfo {
    Eigen::VectorXd v;  // per-row log price ratio, the error in the price column
    double vtv = 0.0;   // v'v

    static MeasurementErrorInfo from_star(const std::vector<StarPricedObservation>& star);
    static MeasurementErrorInfo from_design(const DesignMatrix& design);
};

// Measurement-error correction for the star-price regression: solves
// (X'X - V'V) b = X'y where V'V is zero except vtv in the log_price diagonal
// cell. Also evaluated through the equivalent inverse-product form; the two
// must agree to 1e-10 relative or the system is rejected as unstable.
// vtv == 0 returns the uncorrected coefficients bit for bit.
std::vector<std::pair<std::string, double>> bias_correct(const FitResult& fit,
                                                         const MeasurementErrorInfo& info);

// Model-implied budget shares exp(fitted log q) * price / hh_size / mpce,
// one per design row, priced at the actual or the star price.
std::vector<double> predicted_shares(const FitResult& fit, const SurveyDataset& dataset,
                                     int item_code, PriceChoice price);

// Serialized JSON object: coefficient names and values, dropped columns,
// condition estimate, and (when supplied) the measurement-error weight v'v.
std::string fit_summary_json(const FitResult& fit,
                             std::optional<double> vtv = std::nullopt);

// Order-statistic interval: (sorted[lo_rank-1], sorted[hi_rank-1]), 1-based
// ranks. Callers pass ranks round(0.025 R) and round(0.975 R).
std::pair<double, double> empirical_ci(std::vector<double> values, std::size_t lo_rank,
                                       std::size_t hi_rank);

std::pair<std::size_t, std::size_t> central_ci_ranks(std::size_t n);

}  // namespace thinprice
