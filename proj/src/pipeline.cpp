#include "thinprice/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "thinprice/csv.hpp"
#include "thinprice/errors.hpp"
#include "thinprice/inference.hpp"
#include "thinprice/log.hpp"
#include "thinprice/prevalence.hpp"
#include "thinprice/sampling.hpp"
#include "thinprice/testing.hpp"

namespace thinprice {

namespace {

using nlohmann::json;

// --- config parsing -------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

const json* opt_field(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

template <typename T>
void assign(const json& obj, const char* key, T& target, const std::string& where) {
    const json* f = opt_field(obj, key);
    if (f == nullptr) return;
    try {
        target = f->get<T>();
    } catch (const json::exception&) {
        std::string label = where.empty() ? key : where + "." + key;
        throw ConfigError("config: field '" + label + "' has the wrong type");
    }
}

void assign_path(const json& obj, const char* key, std::filesystem::path& target,
                 const std::string& where) {
    std::string s = target.string();
    assign(obj, key, s, where);
    target = s;
}

GaussianSpec parse_gaussian(const json& obj, const std::string& where) {
    check_keys(obj, {"mean", "sd"}, where);
    GaussianSpec g;
    assign(obj, "mean", g.mean, where);
    assign(obj, "sd", g.sd, where);
    return g;
}

SynthConfig parse_synth(const json& obj) {
    check_keys(obj,
               {"item_code", "fsu_count", "households_per_fsu_min", "households_per_fsu_max",
                "state_count", "rural_share", "consumption_prob_min", "consumption_prob_max",
                "base_log_price", "price_jitter_sd", "log_mpce", "household_size_rate",
                "noise_sd"},
               "input.synth");
    SynthConfig s;
    const std::string where = "input.synth";
    assign(obj, "item_code", s.item_code, where);
    assign(obj, "fsu_count", s.fsu_count, where);
    assign(obj, "households_per_fsu_min", s.households_per_fsu_min, where);
    assign(obj, "households_per_fsu_max", s.households_per_fsu_max, where);
    assign(obj, "state_count", s.state_count, where);
    assign(obj, "rural_share", s.rural_share, where);
    assign(obj, "consumption_prob_min", s.consumption_prob_min, where);
    assign(obj, "consumption_prob_max", s.consumption_prob_max, where);
    if (const json* f = opt_field(obj, "base_log_price"))
        s.base_log_price = parse_gaussian(*f, where + ".base_log_price");
    assign(obj, "price_jitter_sd", s.price_jitter_sd, where);
    if (const json* f = opt_field(obj, "log_mpce"))
        s.log_mpce = parse_gaussian(*f, where + ".log_mpce");
    assign(obj, "household_size_rate", s.household_size_rate, where);
    assign(obj, "noise_sd", s.noise_sd, where);
    return s;
}

GroundTruth parse_truth(const json& obj) {
    check_keys(obj,
               {"sector_effects", "state_effects", "gamma_size", "gamma_price",
                "gamma_expenditure", "consumption_probs"},
               "input.truth");
    GroundTruth t;
    const std::string where = "input.truth";
    assign(obj, "sector_effects", t.sector_effects, where);
    assign(obj, "state_effects", t.state_effects, where);
    assign(obj, "gamma_size", t.gamma_size, where);
    assign(obj, "gamma_price", t.gamma_price, where);
    assign(obj, "gamma_expenditure", t.gamma_expenditure, where);
    assign(obj, "consumption_probs", t.consumption_probs, where);
    return t;
}

CsvSchema parse_schema(const json& obj) {
    check_keys(obj,
               {"fsu_id", "household_id", "sector", "state", "hh_size", "mpce", "item_code",
                "quantity", "value"},
               "input.schema");
    CsvSchema s;
    const std::string where = "input.schema";
    assign(obj, "fsu_id", s.fsu_id, where);
    assign(obj, "household_id", s.household_id, where);
    assign(obj, "sector", s.sector, where);
    assign(obj, "state", s.state, where);
    assign(obj, "hh_size", s.hh_size, where);
    assign(obj, "mpce", s.mpce, where);
    assign(obj, "item_code", s.item_code, where);
    assign(obj, "quantity", s.quantity, where);
    assign(obj, "value", s.value, where);
    return s;
}

InputSpec parse_input(const json& obj) {
    check_keys(obj, {"kind", "csv_path", "schema", "synth", "truth"}, "input");
    InputSpec input;
    std::string kind = "csv";
    assign(obj, "kind", kind, "input");
    if (kind == "csv")
        input.kind = InputSpec::Kind::csv;
    else if (kind == "synthetic")
        input.kind = InputSpec::Kind::synthetic;
    else
        throw ConfigError("config: input.kind must be 'csv' or 'synthetic', got '" + kind + "'");
    assign_path(obj, "csv_path", input.csv_path, "input");
    if (const json* f = opt_field(obj, "schema")) input.schema = parse_schema(*f);
    if (const json* f = opt_field(obj, "synth")) input.synth = parse_synth(*f);
    if (const json* f = opt_field(obj, "truth")) input.truth = parse_truth(*f);
    return input;
}

ScreeningRules parse_screening(const json& obj) {
    check_keys(obj,
               {"ratio_threshold", "mass_threshold", "variable_unit_items",
                "manual_exclusions"},
               "screening");
    ScreeningRules r;
    const std::string where = "screening";
    assign(obj, "ratio_threshold", r.ratio_threshold, where);
    assign(obj, "mass_threshold", r.mass_threshold, where);
    std::vector<int> variable;
    std::vector<int> manual;
    assign(obj, "variable_unit_items", variable, where);
    assign(obj, "manual_exclusions", manual, where);
    r.variable_unit_items.insert(variable.begin(), variable.end());
    r.manual_exclusions.insert(manual.begin(), manual.end());
    return r;
}

// --- json echo -------------------------------------------------------------

json gaussian_json(const GaussianSpec& g) { return {{"mean", g.mean}, {"sd", g.sd}}; }

json config_json(const RunConfig& cfg) {
    json input{{"kind", cfg.input.kind == InputSpec::Kind::csv ? "csv" : "synthetic"}};
    if (cfg.input.kind == InputSpec::Kind::csv) {
        input["csv_path"] = cfg.input.csv_path.generic_string();
        const CsvSchema& s = cfg.input.schema;
        input["schema"] = {{"fsu_id", s.fsu_id},     {"household_id", s.household_id},
                           {"sector", s.sector},     {"state", s.state},
                           {"hh_size", s.hh_size},   {"mpce", s.mpce},
                           {"item_code", s.item_code}, {"quantity", s.quantity},
                           {"value", s.value}};
    } else {
        const SynthConfig& s = cfg.input.synth;
        input["synth"] = {{"item_code", s.item_code},
                          {"fsu_count", s.fsu_count},
                          {"households_per_fsu_min", s.households_per_fsu_min},
                          {"households_per_fsu_max", s.households_per_fsu_max},
                          {"state_count", s.state_count},
                          {"rural_share", s.rural_share},
                          {"consumption_prob_min", s.consumption_prob_min},
                          {"consumption_prob_max", s.consumption_prob_max},
                          {"base_log_price", gaussian_json(s.base_log_price)},
                          {"price_jitter_sd", s.price_jitter_sd},
                          {"log_mpce", gaussian_json(s.log_mpce)},
                          {"household_size_rate", s.household_size_rate},
                          {"noise_sd", s.noise_sd}};
        const GroundTruth& t = cfg.input.truth;
        json truth{{"sector_effects", t.sector_effects},
                   {"state_effects", t.state_effects},
                   {"gamma_size", t.gamma_size},
                   {"gamma_price", t.gamma_price},
                   {"gamma_expenditure", t.gamma_expenditure}};
        if (!t.consumption_probs.empty()) truth["consumption_probs"] = t.consumption_probs;
        input["truth"] = std::move(truth);
    }
    return json{{"input", std::move(input)},
                {"items", cfg.items},
                {"q_levels", cfg.q_levels},
                {"repetitions", cfg.repetitions},
                {"alpha", cfg.alpha},
                {"meta_alpha", cfg.meta_alpha},
                {"master_seed", cfg.master_seed},
                {"output_dir", cfg.output_dir.generic_string()},
                {"screening",
                 {{"ratio_threshold", cfg.screening.ratio_threshold},
                  {"mass_threshold", cfg.screening.mass_threshold},
                  {"variable_unit_items",
                   std::vector<int>(cfg.screening.variable_unit_items.begin(),
                                    cfg.screening.variable_unit_items.end())},
                  {"manual_exclusions",
                   std::vector<int>(cfg.screening.manual_exclusions.begin(),
                                    cfg.screening.manual_exclusions.end())}}},
                {"exact_cap", cfg.exact_cap},
                {"threads", cfg.threads},
                {"audit_selections", cfg.audit_selections}};
}

// --- formatting ------------------------------------------------------------

std::string fixed6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return buf;
}

std::string general6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

// Probabilities below 1e-6 print as a plain 0 in tabular output.
std::string prob_display(double p) {
    if (p < 1e-6) return "0";
    return fixed6(p);
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(root,
               {"input", "items", "q_levels", "repetitions", "alpha", "meta_alpha",
                "master_seed", "output_dir", "screening", "exact_cap", "threads",
                "audit_selections"},
               "the top level");

    RunConfig cfg;
    try {
        if (const json* f = opt_field(root, "input")) cfg.input = parse_input(*f);
        assign(root, "items", cfg.items, "");
        assign(root, "q_levels", cfg.q_levels, "");
        assign(root, "repetitions", cfg.repetitions, "");
        assign(root, "alpha", cfg.alpha, "");
        assign(root, "meta_alpha", cfg.meta_alpha, "");
        assign(root, "master_seed", cfg.master_seed, "");
        assign_path(root, "output_dir", cfg.output_dir, "");
        if (const json* f = opt_field(root, "screening")) cfg.screening = parse_screening(*f);
        assign(root, "exact_cap", cfg.exact_cap, "");
        assign(root, "threads", cfg.threads, "");
        assign(root, "audit_selections", cfg.audit_selections, "");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

std::vector<std::string> validate_config(const RunConfig& cfg) {
    std::vector<std::string> violations;
    auto bad = [&](const std::string& msg) { violations.push_back(msg); };

    if (cfg.input.kind == InputSpec::Kind::csv) {
        if (cfg.input.csv_path.empty()) bad("input.csv_path: required for csv input");
    } else {
        try {
            cfg.input.synth.validate();
        } catch (const ConfigError& e) {
            bad(std::string("input.synth: ") + e.what());
        }
        const GroundTruth& t = cfg.input.truth;
        if (t.sector_effects.size() != 2)
            bad("input.truth.sector_effects: must have exactly 2 entries (rural, urban)");
        if (t.state_effects.size() != static_cast<std::size_t>(cfg.input.synth.state_count))
            bad("input.truth.state_effects: must have one entry per state");
        if (!t.consumption_probs.empty()) {
            if (t.consumption_probs.size() != cfg.input.synth.fsu_count)
                bad("input.truth.consumption_probs: must have one entry per FSU when given");
            for (double p : t.consumption_probs)
                if (!(p >= 0.0 && p <= 1.0)) {
                    bad("input.truth.consumption_probs: entries must lie in [0,1]");
                    break;
                }
        }
    }
    for (double q : cfg.q_levels)
        if (!(q > 0.0 && q < 1.0)) {
            bad("q_levels: every level must lie in (0,1)");
            break;
        }
    if (cfg.repetitions < 1) bad("repetitions: must be >= 1");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) bad("alpha: must lie in (0,1)");
    if (!(cfg.meta_alpha > 0.0 && cfg.meta_alpha < 1.0)) bad("meta_alpha: must lie in (0,1)");
    if (cfg.output_dir.empty()) bad("output_dir: must not be empty");
    if (!(cfg.screening.ratio_threshold > 0.0 && cfg.screening.ratio_threshold < 1.0))
        bad("screening.ratio_threshold: must lie in (0,1)");
    if (!(cfg.screening.mass_threshold > 0.0 && cfg.screening.mass_threshold < 1.0))
        bad("screening.mass_threshold: must lie in (0,1)");
    if (cfg.exact_cap < 1) bad("exact_cap: must be >= 1");
    if (cfg.threads < 0) bad("threads: must be >= 0 (0 means auto)");
    return violations;
}

void atomic_write(const std::filesystem::path& path, const std::string& contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw DataError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 1;
    if (dynamic_cast<const DataError*>(&e) != nullptr) return 2;
    return 3;
}

int resolved_threads(const RunConfig& cfg) {
    if (cfg.threads > 0) return cfg.threads;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct StageContext {
    RunConfig cfg;
    SurveyDataset dataset;
    GroundTruth truth;  // effective ground truth, synthetic inputs only
    ScreeningReport screening;
    std::vector<int> item_set;
    std::vector<std::string> outputs;  // relative paths, emission order
    // First failure per item; later stages may hit the same item again but
    // only the first error is kept. Other items' artifacts are unaffected.
    std::map<int, std::pair<int, std::string>> item_failures;
    bool items_touched = false;  // stage iterated items, manifest lists them

    int worst_item_code() const {
        int worst = 0;
        for (const auto& [item, failure] : item_failures)
            worst = std::max(worst, failure.first);
        return worst;
    }
};

void record_item_failure(StageContext& ctx, int item, const std::exception& e) {
    log::error("item " + std::to_string(item) + ": " + e.what());
    ctx.item_failures.emplace(item,
                              std::pair<int, std::string>{exit_code_for(e), e.what()});
}

StageContext prepare(const RunConfig& cfg) {
    std::vector<std::string> violations = validate_config(cfg);
    if (!violations.empty()) {
        std::string joined;
        for (const std::string& v : violations) {
            log::error("config: " + v);
            joined += (joined.empty() ? "" : "; ") + v;
        }
        throw ConfigError("invalid config: " + joined);
    }

    StageContext ctx;
    ctx.cfg = cfg;
    if (cfg.input.kind == InputSpec::Kind::csv) {
        CsvLoadResult loaded = load_csv(cfg.input.csv_path, cfg.input.schema);
        if (!loaded.dropped_rows.empty())
            log::warn("dropped " + std::to_string(loaded.dropped_rows.size()) +
                      " malformed rows from " + cfg.input.csv_path.string());
        ctx.dataset = std::move(loaded.dataset);
    } else {
        ctx.truth = cfg.input.truth;
        fill_consumption_probs(ctx.truth, cfg.input.synth, cfg.master_seed);
        ctx.dataset = generate_survey(cfg.input.synth, ctx.truth, cfg.master_seed);
    }
    ctx.screening = screen_items(ctx.dataset, cfg.screening);
    ctx.item_set = cfg.items.empty() ? ctx.screening.included_items() : cfg.items;
    // Keep the first occurrence of each requested item.
    std::set<int> seen;
    std::erase_if(ctx.item_set, [&](int item) { return !seen.insert(item).second; });
    return ctx;
}

void emit(StageContext& ctx, const std::string& relative, const std::string& contents) {
    atomic_write(ctx.cfg.output_dir / relative, contents);
    ctx.outputs.push_back(relative);
}

void write_screening(StageContext& ctx) {
    json items = json::array();
    std::ostringstream bins_csv;
    bins_csv << "item_code,bin_lo,bin_hi,count\n";
    for (const ItemScreening& s : ctx.screening.items) {
        json bins = json::array();
        for (int b = 0; b < kRatioHistogramBins; ++b) {
            double lo = static_cast<double>(b) / kRatioHistogramBins;
            double hi = static_cast<double>(b + 1) / kRatioHistogramBins;
            bins.push_back({{"lo", lo}, {"hi", hi}, {"count", s.bin_counts[b]}});
            bins_csv << s.item_code << ',' << csv::format_double(lo) << ','
                     << csv::format_double(hi) << ',' << s.bin_counts[b] << '\n';
        }
        items.push_back({{"item_code", s.item_code},
                         {"ratio_count", s.ratio_count},
                         {"mass_below_threshold", s.mass_below_threshold},
                         {"included", s.included},
                         {"reason", to_string(s.reason)},
                         {"bins", std::move(bins)}});
    }
    json report{{"rules",
                 {{"ratio_threshold", ctx.cfg.screening.ratio_threshold},
                  {"mass_threshold", ctx.cfg.screening.mass_threshold},
                  {"variable_unit_items",
                   std::vector<int>(ctx.cfg.screening.variable_unit_items.begin(),
                                    ctx.cfg.screening.variable_unit_items.end())},
                  {"manual_exclusions",
                   std::vector<int>(ctx.cfg.screening.manual_exclusions.begin(),
                                    ctx.cfg.screening.manual_exclusions.end())}}},
                {"items", std::move(items)}};
    emit(ctx, "screening.json", report.dump(2) + "\n");
    emit(ctx, "screening_bins.csv", bins_csv.str());
}

void write_prevalence(StageContext& ctx) {
    ctx.items_touched = true;
    std::ostringstream out;
    out << "item_code,q,exact_prob,approx_prob,mean,variance,lyapunov_bound\n";
    for (int item : ctx.item_set) {
        std::ostringstream rows;  // buffered so a failed item emits nothing
        try {
            FsuProbEstimate est = estimate_fsu_probs(ctx.dataset, item);
            double mean = 0.0;
            double var = 0.0;
            for (double p : est.probs) {
                mean += p;
                var += p * (1.0 - p);
            }
            bool exact_ok = est.probs.size() <= ctx.cfg.exact_cap;
            std::string lyapunov = var > 0.0 ? general6(1.0 / std::sqrt(var)) : "";
            for (double q : ctx.cfg.q_levels) {
                std::string exact =
                    exact_ok ? prob_display(prevalence_exact(est.probs, q, ctx.cfg.exact_cap))
                             : "";
                std::string approx =
                    var > 0.0 ? prob_display(prevalence_approx(est.probs, q)) : "";
                rows << item << ',' << csv::format_double(q) << ',' << exact << ',' << approx
                     << ',' << general6(mean) << ',' << general6(var) << ',' << lyapunov
                     << '\n';
            }
            out << rows.str();
        } catch (const std::exception& e) {
            record_item_failure(ctx, item, e);
        }
    }
    emit(ctx, "prevalence.csv", out.str());
}

std::string item_file_name(int item_code) {
    return "items/item_" + std::to_string(item_code) + ".json";
}

void write_audit_selections(StageContext& ctx, int item) {
    RepetitionPlan plan{ctx.cfg.master_seed, ctx.cfg.repetitions};
    std::vector<std::uint64_t> seeds = repetition_seeds(plan);
    int width = 1;
    for (std::size_t n = seeds.size() - 1; n >= 10; n /= 10) ++width;
    for (std::size_t r = 0; r < seeds.size(); ++r) {
        ThinSampleAssignment a = draw_thin_sample(ctx.dataset, item, seeds[r]);
        std::ostringstream out;
        out << "fsu_id,selected_household_id\n";
        for (const auto& [fsu, key] : a.selections) out << fsu << ',' << key.household_id << '\n';
        char name[64];
        std::snprintf(name, sizeof(name), "rep_%0*zu.csv", width, r);
        emit(ctx, "items/item_" + std::to_string(item) + "_selections/" + name, out.str());
    }
}

json analyze_one(StageContext& ctx, int item) {
    RepetitionPlan plan{ctx.cfg.master_seed, ctx.cfg.repetitions};
    RepeatedTestResult res =
        repeated_ks_procedure(ctx.dataset, item, plan, ctx.cfg.alpha, ctx.cfg.meta_alpha,
                              resolved_threads(ctx.cfg));

    // The full-data actual-price fit, re-derived for the report.
    ModelSpec spec{ModelKind::actual_price, std::nullopt, std::nullopt};
    FitResult fit = ols_fit(build_design(ctx.dataset, item, spec));

    std::size_t degenerate = 0;
    for (std::uint8_t d : res.degenerate) degenerate += d;
    double p_at_rank = res.rank <= res.repetitions
                           ? res.ordered_p_values[static_cast<std::size_t>(res.rank) - 1]
                           : 1.0;

    json item_json{
        {"item_code", res.item_code},
        {"sample_size", res.sample_size},
        {"repetitions", res.repetitions},
        {"alpha", res.alpha},
        {"meta_alpha", res.meta_alpha},
        {"criterion_rank", res.rank},
        {"decision", res.reject ? "reject" : "accept"},
        {"p_value_at_rank", p_at_rank},
        {"below_alpha", res.below_alpha},
        {"degenerate_repetitions", degenerate},
        {"gamma_price", res.gamma_price},
        {"delta_price_ci", {res.delta_price_ci.first, res.delta_price_ci.second}},
        {"delta_ratio_ci", {res.delta_ratio_ci.first, res.delta_ratio_ci.second}},
        {"actual_fit", json::parse(fit_summary_json(fit))},
        {"p_values", res.p_values},
        {"ordered_p_values", res.ordered_p_values},
        {"delta_price_values", res.delta_price},
        {"delta_ratio_values", res.delta_ratio},
        {"degenerate", res.degenerate},
    };
    emit(ctx, item_file_name(item), item_json.dump(2) + "\n");
    if (ctx.cfg.audit_selections) write_audit_selections(ctx, item);
    return item_json;
}

std::string results_row(const json& item_json) {
    std::ostringstream row;
    row << item_json.at("item_code").get<long long>() << ','
        << item_json.at("sample_size").get<unsigned long long>() << ','
        << fixed6(item_json.at("p_value_at_rank").get<double>()) << ','
        << general6(item_json.at("delta_ratio_ci")[0].get<double>()) << ','
        << general6(item_json.at("delta_ratio_ci")[1].get<double>()) << ','
        << general6(item_json.at("gamma_price").get<double>()) << ','
        << general6(item_json.at("delta_price_ci")[0].get<double>()) << ','
        << general6(item_json.at("delta_price_ci")[1].get<double>()) << ','
        << item_json.at("decision").get<std::string>() << '\n';
    return row.str();
}

const char* kResultsHeader =
    "item_code,sample_size,p_value_at_rank_c,delta_ratio_lcb,delta_ratio_ucb,gamma_price,"
    "delta_price_lcb,delta_price_ucb,decision\n";

void analyze_items(StageContext& ctx) {
    ctx.items_touched = true;
    std::ostringstream results;
    results << kResultsHeader;
    for (int item : ctx.item_set) {
        try {
            json item_json = analyze_one(ctx, item);
            results << results_row(item_json);
        } catch (const std::exception& e) {
            record_item_failure(ctx, item, e);
        }
    }
    emit(ctx, "results.csv", results.str());
}

void write_manifest(StageContext& ctx, const std::string& stage) {
    std::sort(ctx.outputs.begin(), ctx.outputs.end());
    json item_status = json::array();
    if (ctx.items_touched) {
        for (int item : ctx.item_set) {
            auto it = ctx.item_failures.find(item);
            if (it == ctx.item_failures.end())
                item_status.push_back({{"item_code", item}, {"status", "ok"}});
            else
                item_status.push_back({{"item_code", item},
                                       {"status", "failed"},
                                       {"error", it->second.second}});
        }
    }
    json manifest{{"tool", {{"name", kToolName}, {"version", kToolVersion}}},
                  {"stage", stage},
                  {"config", config_json(ctx.cfg)},
                  {"master_seed", ctx.cfg.master_seed},
                  {"items", std::move(item_status)},
                  {"outputs", ctx.outputs}};
    atomic_write(ctx.cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
}

int guarded(const char* stage, const std::function<int()>& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        log::error(std::string(stage) + ": " + e.what());
        return exit_code_for(e);
    }
}

}  // namespace

int run_synth(const RunConfig& cfg) {
    return guarded("synth", [&] {
        if (cfg.input.kind != InputSpec::Kind::synthetic)
            throw ConfigError("synth requires input.kind = \"synthetic\"");
        StageContext ctx = prepare(cfg);
        std::filesystem::create_directories(cfg.output_dir);
        std::filesystem::path tmp = cfg.output_dir / "dataset.csv.tmp";
        write_csv(ctx.dataset, tmp);
        std::filesystem::rename(tmp, cfg.output_dir / "dataset.csv");
        ctx.outputs.push_back("dataset.csv");
        json truth{{"sector_effects", ctx.truth.sector_effects},
                   {"state_effects", ctx.truth.state_effects},
                   {"gamma_size", ctx.truth.gamma_size},
                   {"gamma_price", ctx.truth.gamma_price},
                   {"gamma_expenditure", ctx.truth.gamma_expenditure},
                   {"consumption_probs", ctx.truth.consumption_probs}};
        emit(ctx, "synth_truth.json", truth.dump(2) + "\n");
        write_manifest(ctx, "synth");
        return 0;
    });
}

int run_screen(const RunConfig& cfg) {
    return guarded("screen", [&] {
        StageContext ctx = prepare(cfg);
        write_screening(ctx);
        write_manifest(ctx, "screen");
        return 0;
    });
}

int run_prevalence(const RunConfig& cfg) {
    return guarded("prevalence", [&] {
        StageContext ctx = prepare(cfg);
        write_prevalence(ctx);
        write_manifest(ctx, "prevalence");
        return ctx.worst_item_code();
    });
}

int run_analyze(const RunConfig& cfg) {
    return guarded("analyze", [&] {
        StageContext ctx = prepare(cfg);
        analyze_items(ctx);
        write_manifest(ctx, "analyze");
        return ctx.worst_item_code();
    });
}

int run_full(const RunConfig& cfg) {
    return guarded("run", [&] {
        StageContext ctx = prepare(cfg);
        write_screening(ctx);
        write_prevalence(ctx);
        analyze_items(ctx);
        write_manifest(ctx, "run");
        return ctx.worst_item_code();
    });
}

int run_report(const RunConfig& cfg) {
    return guarded("report", [&] {
        std::filesystem::path items_dir = cfg.output_dir / "items";
        if (!std::filesystem::is_directory(items_dir))
            throw DataError("no item results under " + items_dir.string() +
                            "; run analyze first");
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(items_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".json")
                files.push_back(entry.path());
        if (files.empty())
            throw DataError("no item results under " + items_dir.string() +
                            "; run analyze first");

        std::vector<std::pair<std::filesystem::path, json>> loaded;
        for (const std::filesystem::path& file : files) {
            std::ifstream in(file);
            try {
                loaded.emplace_back(file, json::parse(in));
                loaded.back().second.at("item_code").get<long long>();
            } catch (const json::exception& e) {
                throw DataError("cannot read " + file.string() + ": " + e.what());
            }
        }
        // Rows in item-code order, matching the analyze stage, not file order.
        std::sort(loaded.begin(), loaded.end(), [](const auto& a, const auto& b) {
            return a.second.at("item_code").template get<long long>() <
                   b.second.at("item_code").template get<long long>();
        });

        std::ostringstream results;
        results << kResultsHeader;
        std::printf("%-10s %-12s %-16s %-10s %-22s %-22s %s\n", "item", "sample_size",
                    "p_at_rank", "decision", "delta_ratio_ci", "delta_price_ci",
                    "gamma_price");
        for (const auto& [file, item_json] : loaded) {
            try {
                results << results_row(item_json);
                char ratio_ci[64];
                char price_ci[64];
                std::snprintf(ratio_ci, sizeof(ratio_ci), "[%.4g, %.4g]",
                              item_json.at("delta_ratio_ci")[0].get<double>(),
                              item_json.at("delta_ratio_ci")[1].get<double>());
                std::snprintf(price_ci, sizeof(price_ci), "[%.4g, %.4g]",
                              item_json.at("delta_price_ci")[0].get<double>(),
                              item_json.at("delta_price_ci")[1].get<double>());
                std::printf("%-10lld %-12llu %-16s %-10s %-22s %-22s %s\n",
                            item_json.at("item_code").get<long long>(),
                            item_json.at("sample_size").get<unsigned long long>(),
                            fixed6(item_json.at("p_value_at_rank").get<double>()).c_str(),
                            item_json.at("decision").get<std::string>().c_str(), ratio_ci,
                            price_ci,
                            general6(item_json.at("gamma_price").get<double>()).c_str());
            } catch (const json::exception& e) {
                throw DataError("cannot read " + file.string() + ": " + e.what());
            }
        }
        atomic_write(cfg.output_dir / "results.csv", results.str());
        return 0;
    });
}

}  // namespace thinprice
