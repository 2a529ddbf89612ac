#include "thinprice/inference.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "thinprice/errors.hpp"

namespace thinprice {

namespace {

int find_column(const std::vector<std::string>& names, std::string_view name) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

// 2-norm condition number of a square matrix via its singular values.
double condition_of(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    double smin = svd.singularValues().minCoeff();
    double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

}  // namespace

int DesignMatrix::column_index(std::string_view name) const {
    return find_column(column_names, name);
}

int FitResult::column_index(std::string_view name) const {
    return find_column(column_names, name);
}

double FitResult::coefficient(std::string_view name) const {
    int idx = column_index(name);
    if (idx < 0) throw DataError("fit has no column named '" + std::string(name) + "'");
    return coefficients[idx];
}

double FitResult::coefficient_or(std::string_view name, double fallback) const {
    int idx = column_index(name);
    return idx < 0 ? fallback : coefficients[idx];
}

DesignMatrix build_design(const SurveyDataset& dataset, int item_code, const ModelSpec& spec,
                          const std::vector<StarPricedObservation>* star) {
    auto span = dataset.observations_for(item_code);
    bool decomposed = spec.kind == ModelKind::star_price_decomposed;
    if (decomposed) {
        if (star == nullptr)
            throw DataError("star-price model requires star-priced observations");
        if (star->size() != span.size())
            throw DataError("star-priced observations do not match the item's observations");
        for (std::size_t i = 0; i < span.size(); ++i)
            if (!((*star)[i].base.key == span[i].key) ||
                (*star)[i].base.item_code != item_code)
                throw DataError("star-priced observations do not match the item's observations");
    } else if (star != nullptr) {
        throw DataError("actual-price model takes no star-priced observations");
    }

    // Levels present among the rows decide which dummies exist.
    std::set<Sector> sectors;
    std::set<std::string> states;
    for (const ItemObservation& obs : span) {
        const HouseholdRecord& h = dataset.household(obs.key);
        sectors.insert(h.sector);
        states.insert(h.state);
    }

    Sector sector_ref = Sector::rural;
    if (spec.sector_reference) {
        if (!sectors.count(*spec.sector_reference))
            throw DataError("reference sector '" + to_string(*spec.sector_reference) +
                            "' absent from the design rows");
        sector_ref = *spec.sector_reference;
    } else if (!sectors.count(Sector::rural)) {
        sector_ref = Sector::urban;
    }
    std::string state_ref;
    if (spec.state_reference) {
        if (!states.count(*spec.state_reference))
            throw DataError("reference state '" + *spec.state_reference +
                            "' absent from the design rows");
        state_ref = *spec.state_reference;
    } else {
        state_ref = *states.begin();
    }

    std::vector<std::string> names;
    names.push_back("intercept");
    std::vector<Sector> dummy_sectors;
    for (Sector s : sectors)
        if (s != sector_ref) {
            dummy_sectors.push_back(s);
            names.push_back("sector_" + to_string(s));
        }
    std::vector<std::string> dummy_states;
    for (const std::string& s : states)
        if (s != state_ref) {
            dummy_states.push_back(s);
            names.push_back("state_" + s);
        }
    names.push_back("hh_size");
    names.push_back("log_price");
    names.push_back("log_mpce");
    if (decomposed) names.push_back("log_price_ratio");

    const std::size_t n = span.size();
    Eigen::MatrixXd full(n, names.size());
    Eigen::VectorXd y(n);
    std::vector<DesignRow> rows(n);
    std::size_t base = span.data() - dataset.observations().data();
    for (std::size_t i = 0; i < n; ++i) {
        const ItemObservation& obs = span[i];
        const HouseholdRecord& h = dataset.household(obs.key);
        std::size_t c = 0;
        full(i, c++) = 1.0;
        for (Sector s : dummy_sectors) full(i, c++) = h.sector == s ? 1.0 : 0.0;
        for (const std::string& s : dummy_states) full(i, c++) = h.state == s ? 1.0 : 0.0;
        full(i, c++) = h.hh_size;
        double price = decomposed ? (*star)[i].star_price : unit_price(obs);
        full(i, c++) = std::log(price);
        full(i, c++) = std::log(h.mpce);
        if (decomposed) full(i, c++) = (*star)[i].log_price_ratio;
        y(i) = std::log(obs.quantity);
        rows[i] = {base + i, decomposed ? (*star)[i].star_price : 0.0};
    }

    DesignMatrix design;
    design.item_code = item_code;
    design.kind = spec.kind;
    design.y = std::move(y);
    design.rows = std::move(rows);

    // Constant non-intercept columns carry no information and would break
    // the solve; prune them and record why.
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < names.size(); ++c) {
        if (c > 0 && full.col(c).maxCoeff() == full.col(c).minCoeff()) {
            design.dropped_columns.push_back({names[c], "degenerate: zero variance"});
            continue;
        }
        kept.push_back(c);
    }
    design.x.resize(n, kept.size());
    for (std::size_t j = 0; j < kept.size(); ++j) {
        design.x.col(j) = full.col(kept[j]);
        design.column_names.push_back(names[kept[j]]);
    }

    if (design.x.rows() < design.x.cols())
        throw DataError("design for item " + std::to_string(item_code) + " has " +
                        std::to_string(design.x.rows()) + " rows for " +
                        std::to_string(design.x.cols()) + " columns");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.x);
    if (qr.rank() < design.x.cols()) {
        std::ostringstream msg;
        msg << "collinear design for item " << item_code << ": dependent columns";
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < design.x.cols(); ++j)
            msg << ' ' << design.column_names[static_cast<std::size_t>(perm[j])];
        throw DataError(msg.str());
    }
    return design;
}

FitResult ols_fit(const DesignMatrix& design) {
    if (design.x.rows() == 0 || design.x.cols() == 0)
        throw DataError("cannot fit an empty design");
    if (design.x.rows() != design.y.size())
        throw DataError("design matrix and response disagree on row count");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.x);
    Eigen::MatrixXd r = qr.matrixR()
                            .topLeftCorner(design.x.cols(), design.x.cols())
                            .triangularView<Eigen::Upper>();
    double condition = condition_of(r);
    if (qr.rank() < design.x.cols() || !(condition < kConditionCap))
        throw NumericalError("numerically singular system: condition estimate " +
                             std::to_string(condition) + " exceeds cap " +
                             std::to_string(kConditionCap));

    FitResult fit;
    fit.item_code = design.item_code;
    fit.kind = design.kind;
    fit.column_names = design.column_names;
    fit.coefficients = qr.solve(design.y);
    fit.fitted = design.x * fit.coefficients;
    fit.residuals = design.y - fit.fitted;
    fit.gram = design.x.transpose() * design.x;
    fit.xty = design.x.transpose() * design.y;
    fit.condition = condition;
    fit.rows = design.rows;
    fit.dropped_columns = design.dropped_columns;
    return fit;
}

MeasurementErrorInfo MeasurementErrorInfo::from_star(
    const std::vector<StarPricedObservation>& star) {
    MeasurementErrorInfo info;
    info.v.resize(static_cast<Eigen::Index>(star.size()));
    for (std::size_t i = 0; i < star.size(); ++i) info.v[static_cast<Eigen::Index>(i)] =
        star[i].log_price_ratio;
    info.vtv = info.v.squaredNorm();
    return info;
}

MeasurementErrorInfo MeasurementErrorInfo::from_design(const DesignMatrix& design) {
    int idx = design.column_index("log_price_ratio");
    if (idx < 0) throw DataError("design has no log_price_ratio column");
    MeasurementErrorInfo info;
    info.v = design.x.col(idx);
    info.vtv = info.v.squaredNorm();
    return info;
}

std::vector<std::pair<std::string, double>> bias_correct(const FitResult& fit,
                                                         const MeasurementErrorInfo& info) {
    int price = fit.column_index("log_price");
    if (price < 0) throw DataError("bias correction requires a log_price column");
    if (info.vtv < 0.0) throw DataError("bias correction: v'v must be non-negative");
    if (info.v.size() != 0) {
        if (static_cast<std::size_t>(info.v.size()) != fit.rows.size())
            throw DataError("bias correction: v has " + std::to_string(info.v.size()) +
                            " entries for " + std::to_string(fit.rows.size()) + " design rows");
        if (std::abs(info.v.squaredNorm() - info.vtv) >
            1e-9 * std::max(1.0, std::abs(info.vtv)))
            throw DataError("bias correction: vtv disagrees with v'v");
    }

    auto named = [&](const Eigen::VectorXd& b) {
        std::vector<std::pair<std::string, double>> out;
        for (std::size_t i = 0; i < fit.column_names.size(); ++i)
            out.emplace_back(fit.column_names[i], b[static_cast<Eigen::Index>(i)]);
        return out;
    };
    if (info.vtv == 0.0) return named(fit.coefficients);

    Eigen::MatrixXd corrected_gram = fit.gram;
    corrected_gram(price, price) -= info.vtv;
    double condition = condition_of(corrected_gram);
    if (!(condition < kConditionCap))
        throw NumericalError("bias correction unstable: X'X - V'V has condition estimate " +
                             std::to_string(condition));

    // Direct form: (X'X - V'V)^{-1} X'y.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(corrected_gram);
    Eigen::VectorXd direct = lu.solve(fit.xty);

    // Equivalent product form: (I - (X'X)^{-1} V'V)^{-1} b_ols.
    Eigen::Index k = fit.gram.rows();
    Eigen::MatrixXd vtv_matrix = Eigen::MatrixXd::Zero(k, k);
    vtv_matrix(price, price) = info.vtv;
    Eigen::MatrixXd multiplier =
        Eigen::MatrixXd::Identity(k, k) - fit.gram.fullPivLu().solve(vtv_matrix);
    Eigen::VectorXd product = multiplier.fullPivLu().solve(fit.coefficients);

    double scale = std::max(direct.norm(), 1e-300);
    if ((direct - product).norm() / scale > 1e-10)
        throw NumericalError(
            "bias correction unstable: the two equivalent forms disagree beyond 1e-10 "
            "relative (relative gap " +
            std::to_string((direct - product).norm() / scale) + ")");
    return named(direct);
}

std::vector<double> predicted_shares(const FitResult& fit, const SurveyDataset& dataset,
                                     int item_code, PriceChoice price) {
    if (fit.item_code != item_code)
        throw DataError("fit is for item " + std::to_string(fit.item_code) + ", not " +
                        std::to_string(item_code));
    if (price == PriceChoice::star && fit.kind != ModelKind::star_price_decomposed)
        throw DataError("star-priced shares require a star-price fit");
    std::vector<double> shares;
    shares.reserve(fit.rows.size());
    for (std::size_t i = 0; i < fit.rows.size(); ++i) {
        const DesignRow& row = fit.rows[i];
        if (row.observation_index >= dataset.observations().size())
            throw DataError("fit references an observation outside the dataset");
        const ItemObservation& obs = dataset.observations()[row.observation_index];
        double p = price == PriceChoice::star ? row.star_price : unit_price(obs);
        double quantity = std::exp(fit.fitted[static_cast<Eigen::Index>(i)]);
        shares.push_back(household_share(dataset, obs.key, obs.item_code, p * quantity));
    }
    return shares;
}

std::string fit_summary_json(const FitResult& fit, std::optional<double> vtv) {
    nlohmann::json coeffs = nlohmann::json::object();
    for (std::size_t i = 0; i < fit.column_names.size(); ++i)
        coeffs[fit.column_names[i]] = fit.coefficients[static_cast<Eigen::Index>(i)];
    nlohmann::json dropped = nlohmann::json::array();
    for (const DroppedColumn& d : fit.dropped_columns)
        dropped.push_back({{"name", d.name}, {"reason", d.reason}});
    nlohmann::json summary{
        {"item_code", fit.item_code},
        {"model", fit.kind == ModelKind::actual_price ? "actual_price"
                                                      : "star_price_decomposed"},
        {"coefficients", std::move(coeffs)},
        {"dropped_columns", std::move(dropped)},
        {"condition", fit.condition},
        {"rows", fit.rows.size()},
    };
    if (vtv) summary["vtv"] = *vtv;
    return summary.dump(2);
}

std::pair<double, double> empirical_ci(std::vector<double> values, std::size_t lo_rank,
                                       std::size_t hi_rank) {
    if (values.empty()) throw DataError("empirical interval of an empty sample");
    if (lo_rank < 1 || lo_rank > hi_rank || hi_rank > values.size())
        throw DataError("empirical interval ranks (" + std::to_string(lo_rank) + ", " +
                        std::to_string(hi_rank) + ") invalid for a sample of " +
                        std::to_string(values.size()));
    std::sort(values.begin(), values.end());
    return {values[lo_rank - 1], values[hi_rank - 1]};
}

std::pair<std::size_t, std::size_t> central_ci_ranks(std::size_t n) {
    auto lo = static_cast<std::size_t>(std::llround(0.025 * static_cast<double>(n)));
    auto hi = static_cast<std::size_t>(std::llround(0.975 * static_cast<double>(n)));
    lo = std::max<std::size_t>(1, lo);
    hi = std::min(n, std::max(hi, lo));
    return {lo, hi};
}

}  // namespace thinprice
