#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "thinprice/errors.hpp"
#include "thinprice/pipeline.hpp"

using namespace thinprice;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("thinprice_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::size_t line_count(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Relative path -> bytes for every regular file under root.
std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> snapshot;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            snapshot[fs::relative(entry.path(), root).generic_string()] =
                read_file(entry.path());
    return snapshot;
}

RunConfig synthetic_config(const fs::path& out) {
    RunConfig cfg;
    cfg.input.kind = InputSpec::Kind::synthetic;
    cfg.input.synth.item_code = 101;
    cfg.input.synth.fsu_count = 40;
    cfg.input.synth.households_per_fsu_min = 3;
    cfg.input.synth.households_per_fsu_max = 5;
    cfg.input.synth.state_count = 3;
    cfg.input.synth.consumption_prob_min = 0.5;
    cfg.input.synth.consumption_prob_max = 0.8;
    cfg.input.synth.price_jitter_sd = 0.05;
    cfg.input.synth.noise_sd = 0.3;
    cfg.input.truth.sector_effects = {0.0, 0.25};
    cfg.input.truth.state_effects = {0.0, 0.1, -0.05};
    cfg.input.truth.gamma_size = 0.05;
    cfg.input.truth.gamma_price = -1.3;
    cfg.input.truth.gamma_expenditure = 0.75;
    cfg.repetitions = 15;
    cfg.master_seed = 5;
    cfg.output_dir = out;
    return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("config validation names each violated field") {
    TempDir dir("validate");
    RunConfig cfg = synthetic_config(dir.path / "out");
    CHECK(validate_config(cfg).empty());

    auto has_violation = [](const RunConfig& c, const std::string& needle) {
        for (const std::string& v : validate_config(c))
            if (v.find(needle) != std::string::npos) return true;
        return false;
    };

    RunConfig bad = cfg;
    bad.alpha = 1.5;
    CHECK(has_violation(bad, "alpha"));
    bad = cfg;
    bad.repetitions = 0;
    CHECK(has_violation(bad, "repetitions"));
    bad = cfg;
    bad.q_levels = {0.5, 0.0};
    CHECK(has_violation(bad, "q_levels"));
    bad = cfg;
    bad.screening.ratio_threshold = 1.0;
    CHECK(has_violation(bad, "screening.ratio_threshold"));
    bad = cfg;
    bad.threads = -2;
    CHECK(has_violation(bad, "threads"));
    bad = cfg;
    bad.input.truth.state_effects = {0.0};
    CHECK(has_violation(bad, "state_effects"));
    bad = cfg;
    bad.input.truth.consumption_probs = {0.5};
    CHECK(has_violation(bad, "consumption_probs"));

    RunConfig csv;
    csv.input.kind = InputSpec::Kind::csv;
    CHECK(has_violation(csv, "csv_path"));
}

TEST_CASE("config files parse strictly") {
    TempDir dir("config");
    fs::path file = dir.path / "run.json";

    write_text(file, R"({
      "input": {"kind": "synthetic",
                "synth": {"fsu_count": 12, "state_count": 2},
                "truth": {"sector_effects": [0, 0.2], "state_effects": [0, 0.1],
                          "gamma_price": -1.5}},
      "items": [101, 7],
      "q_levels": [0.5],
      "repetitions": 9,
      "alpha": 0.1,
      "master_seed": 42,
      "output_dir": "somewhere",
      "threads": 2,
      "audit_selections": true
    })");
    RunConfig cfg = load_run_config(file);
    CHECK(cfg.input.kind == InputSpec::Kind::synthetic);
    CHECK(cfg.input.synth.fsu_count == 12);
    CHECK(cfg.input.synth.state_count == 2);
    CHECK(cfg.input.truth.gamma_price == -1.5);
    CHECK(cfg.items == std::vector<int>{101, 7});
    CHECK(cfg.q_levels == std::vector<double>{0.5});
    CHECK(cfg.repetitions == 9);
    CHECK(cfg.alpha == 0.1);
    CHECK(cfg.meta_alpha == 0.05);  // untouched default
    CHECK(cfg.master_seed == 42);
    CHECK(cfg.output_dir == fs::path("somewhere"));
    CHECK(cfg.threads == 2);
    CHECK(cfg.audit_selections);

    write_text(file, R"({"repetitions": 5, "surprise": 1})");
    CHECK_THROWS_WITH_AS(load_run_config(file), doctest::Contains("surprise"), ConfigError);

    write_text(file, R"({"alpha": "high"})");
    CHECK_THROWS_WITH_AS(load_run_config(file), doctest::Contains("alpha"), ConfigError);

    write_text(file, R"({"input": {"synth": {"fsu_count": "many"}}})");
    CHECK_THROWS_WITH_AS(load_run_config(file), doctest::Contains("fsu_count"), ConfigError);

    write_text(file, "not json at all");
    CHECK_THROWS_AS(load_run_config(file), ConfigError);

    CHECK_THROWS_AS(load_run_config(dir.path / "missing.json"), ConfigError);
}

TEST_CASE("a full run writes the complete artifact set") {
    TempDir dir("full");
    RunConfig cfg = synthetic_config(dir.path / "out");
    REQUIRE(run_full(cfg) == 0);

    for (const char* name : {"manifest.json", "screening.json", "screening_bins.csv",
                             "prevalence.csv", "results.csv", "items/item_101.json"})
        CHECK(fs::is_regular_file(cfg.output_dir / name));

    std::string prevalence = read_file(cfg.output_dir / "prevalence.csv");
    CHECK(line_count(prevalence) == 1 + 3);  // header + one row per q level
    CHECK(prevalence.rfind("item_code,q,exact_prob,approx_prob,mean,variance,"
                           "lyapunov_bound\n", 0) == 0);

    std::string results = read_file(cfg.output_dir / "results.csv");
    CHECK(line_count(results) == 2);
    CHECK(results.rfind("item_code,sample_size,p_value_at_rank_c,delta_ratio_lcb,"
                        "delta_ratio_ucb,gamma_price,delta_price_lcb,delta_price_ucb,"
                        "decision\n", 0) == 0);
    CHECK(results.find("\n101,") != std::string::npos);

    nlohmann::json manifest =
        nlohmann::json::parse(read_file(cfg.output_dir / "manifest.json"));
    CHECK(manifest["tool"]["name"] == "thinprice");
    CHECK(manifest["stage"] == "run");
    CHECK(manifest["master_seed"] == 5);
    CHECK(manifest["config"]["repetitions"] == 15);
    CHECK(manifest["config"]["input"]["kind"] == "synthetic");
    REQUIRE(manifest["items"].size() == 1);
    CHECK(manifest["items"][0]["item_code"] == 101);
    CHECK(manifest["items"][0]["status"] == "ok");
    auto outputs = manifest["outputs"].get<std::vector<std::string>>();
    CHECK(std::is_sorted(outputs.begin(), outputs.end()));
    for (const char* name :
         {"screening.json", "prevalence.csv", "results.csv", "items/item_101.json"})
        CHECK(std::find(outputs.begin(), outputs.end(), name) != outputs.end());

    nlohmann::json item =
        nlohmann::json::parse(read_file(cfg.output_dir / "items/item_101.json"));
    CHECK(item["item_code"] == 101);
    CHECK(item["repetitions"] == 15);
    CHECK(item["criterion_rank"].get<int>() >= 1);
    CHECK(item["p_values"].size() == 15);
    CHECK(item["ordered_p_values"].size() == 15);
    CHECK(item["delta_price_values"].size() == 15);
    CHECK(item["delta_ratio_values"].size() == 15);
    CHECK(item["degenerate"].size() == 15);
    CHECK(item["actual_fit"]["coefficients"].contains("log_price"));
    CHECK((item["decision"] == "accept" || item["decision"] == "reject"));
}

TEST_CASE("reruns are byte-identical") {
    TempDir dir("rerun");
    RunConfig cfg = synthetic_config(dir.path / "out");
    REQUIRE(run_full(cfg) == 0);
    auto first = snapshot_tree(cfg.output_dir);
    REQUIRE(run_full(cfg) == 0);
    auto second = snapshot_tree(cfg.output_dir);
    CHECK(first == second);
    CHECK(first.size() >= 6);
}

TEST_CASE("homogeneous prices are accepted through the whole pipeline") {
    TempDir dir("accept");
    RunConfig cfg = synthetic_config(dir.path / "out");
    cfg.input.synth.price_jitter_sd = 0.0;
    REQUIRE(run_full(cfg) == 0);

    std::string results = read_file(cfg.output_dir / "results.csv");
    CHECK(results.find(",accept\n") != std::string::npos);
    CHECK(results.find(",reject\n") == std::string::npos);

    nlohmann::json item =
        nlohmann::json::parse(read_file(cfg.output_dir / "items/item_101.json"));
    CHECK(item["decision"] == "accept");
    CHECK(item["degenerate_repetitions"] == 15);
    for (const auto& p : item["p_values"]) CHECK(p.get<double>() == 1.0);
}

TEST_CASE("the report stage reconstructs the results table") {
    TempDir dir("report");
    RunConfig cfg = synthetic_config(dir.path / "out");
    REQUIRE(run_full(cfg) == 0);
    std::string original = read_file(cfg.output_dir / "results.csv");
    fs::remove(cfg.output_dir / "results.csv");
    REQUIRE(run_report(cfg) == 0);
    CHECK(read_file(cfg.output_dir / "results.csv") == original);

    RunConfig empty = cfg;
    empty.output_dir = dir.path / "nowhere";
    CHECK(run_report(empty) == 2);
}

TEST_CASE("audit selections dump one file per repetition") {
    TempDir dir("audit");
    RunConfig cfg = synthetic_config(dir.path / "out");
    cfg.repetitions = 5;
    cfg.audit_selections = true;
    REQUIRE(run_full(cfg) == 0);
    fs::path sel = cfg.output_dir / "items/item_101_selections";
    REQUIRE(fs::is_directory(sel));
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(sel)) {
        ++files;
        std::string body = read_file(entry.path());
        CHECK(body.rfind("fsu_id,selected_household_id\n", 0) == 0);
        CHECK(line_count(body) > 1);
    }
    CHECK(files == 5);
    CHECK(fs::is_regular_file(sel / "rep_0.csv"));
    CHECK(fs::is_regular_file(sel / "rep_4.csv"));
}

TEST_CASE("synthetic data round-trips through the csv input path") {
    TempDir dir("roundtrip");
    RunConfig synth_cfg = synthetic_config(dir.path / "gen");
    REQUIRE(run_synth(synth_cfg) == 0);
    CHECK(fs::is_regular_file(dir.path / "gen/dataset.csv"));
    CHECK(fs::is_regular_file(dir.path / "gen/synth_truth.json"));
    nlohmann::json truth =
        nlohmann::json::parse(read_file(dir.path / "gen/synth_truth.json"));
    CHECK(truth["consumption_probs"].size() == 40);

    RunConfig csv_cfg;
    csv_cfg.input.kind = InputSpec::Kind::csv;
    csv_cfg.input.csv_path = dir.path / "gen/dataset.csv";
    csv_cfg.repetitions = 10;
    csv_cfg.master_seed = 5;
    csv_cfg.output_dir = dir.path / "csv_out";
    REQUIRE(run_full(csv_cfg) == 0);
    CHECK(fs::is_regular_file(csv_cfg.output_dir / "results.csv"));
    nlohmann::json manifest =
        nlohmann::json::parse(read_file(csv_cfg.output_dir / "manifest.json"));
    CHECK(manifest["config"]["input"]["kind"] == "csv");

    // synth on a csv config is a contradiction.
    CHECK(run_synth(csv_cfg) == 1);
}

TEST_CASE("stage exit codes reflect the error taxonomy") {
    TempDir dir("codes");
    RunConfig invalid = synthetic_config(dir.path / "out1");
    invalid.alpha = 1.5;
    CHECK(run_full(invalid) == 1);
    CHECK_FALSE(fs::exists(dir.path / "out1"));  // refused before any artifact

    RunConfig missing;
    missing.input.kind = InputSpec::Kind::csv;
    missing.input.csv_path = dir.path / "absent.csv";
    missing.output_dir = dir.path / "out2";
    CHECK(run_screen(missing) == 2);
}

TEST_CASE("item-scoped failures keep the other items' results") {
    TempDir dir("partial");
    RunConfig cfg = synthetic_config(dir.path / "out");
    cfg.items = {101, 999};  // 999 never exists
    CHECK(run_full(cfg) == 2);

    std::string results = read_file(cfg.output_dir / "results.csv");
    CHECK(results.find("\n101,") != std::string::npos);
    CHECK(results.find("\n999,") == std::string::npos);
    CHECK(fs::is_regular_file(cfg.output_dir / "items/item_101.json"));
    CHECK_FALSE(fs::exists(cfg.output_dir / "items/item_999.json"));

    std::string prevalence = read_file(cfg.output_dir / "prevalence.csv");
    CHECK(line_count(prevalence) == 1 + 3);  // only the healthy item's rows

    nlohmann::json manifest =
        nlohmann::json::parse(read_file(cfg.output_dir / "manifest.json"));
    REQUIRE(manifest["items"].size() == 2);
    CHECK(manifest["items"][0]["item_code"] == 101);
    CHECK(manifest["items"][0]["status"] == "ok");
    CHECK(manifest["items"][1]["item_code"] == 999);
    CHECK(manifest["items"][1]["status"] == "failed");
    CHECK(manifest["items"][1]["error"].get<std::string>().find("999") !=
          std::string::npos);
}

TEST_CASE("atomic writes create parents and replace cleanly") {
    TempDir dir("atomic");
    fs::path target = dir.path / "a/b/c.txt";
    atomic_write(target, "first");
    CHECK(read_file(target) == "first");
    atomic_write(target, "second");
    CHECK(read_file(target) == "second");
    CHECK_FALSE(fs::exists(dir.path / "a/b/c.txt.tmp"));
}
