#include <cstdint>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "thinprice/errors.hpp"
#include "thinprice/log.hpp"
#include "thinprice/pipeline.hpp"

namespace {

int code_for(const std::exception& e) {
    if (dynamic_cast<const thinprice::ConfigError*>(&e) != nullptr) return 1;
    if (dynamic_cast<const thinprice::DataError*>(&e) != nullptr) return 2;
    return 3;
}

std::vector<int> parse_item_list(const std::string& text) {
    std::vector<int> items;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string piece = comma == std::string::npos ? text.substr(start)
                                                       : text.substr(start, comma - start);
        if (!piece.empty()) {
            try {
                std::size_t used = 0;
                items.push_back(std::stoi(piece, &used));
                if (used != piece.size()) throw std::invalid_argument(piece);
            } catch (const std::exception&) {
                throw thinprice::ConfigError("--items: '" + piece + "' is not an item code");
            }
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return items;
}

}  // namespace

int main(int argc, char** argv) {
    thinprice::log::init_from_env();

    CLI::App app{"thin price-sample survey auditing pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string items_csv;
    std::string output_dir;
    std::uint64_t seed = 0;
    int threads = 0;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    CLI::Option* items_opt =
        app.add_option("--items", items_csv, "comma-separated item codes (overrides config)");
    CLI::Option* seed_opt =
        app.add_option("--seed", seed, "master seed (overrides config)");
    CLI::Option* output_opt =
        app.add_option("--output", output_dir, "output directory (overrides config)");
    CLI::Option* threads_opt =
        app.add_option("--threads", threads, "worker threads, 0 = auto (overrides config)");

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic survey");
    CLI::App* screen = app.add_subcommand("screen", "item screening report");
    CLI::App* prevalence = app.add_subcommand("prevalence", "thin-sample prevalence report");
    CLI::App* analyze = app.add_subcommand("analyze", "repeated thin-sample tests");
    CLI::App* report = app.add_subcommand("report", "summarize analysis results");
    CLI::App* run = app.add_subcommand("run", "screen + prevalence + analyze");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        thinprice::RunConfig cfg = thinprice::load_run_config(config_path);
        if (items_opt->count() > 0) cfg.items = parse_item_list(items_csv);
        if (seed_opt->count() > 0) cfg.master_seed = seed;
        if (output_opt->count() > 0) cfg.output_dir = output_dir;
        if (threads_opt->count() > 0) {
            if (threads < 0) throw thinprice::ConfigError("--threads: must be >= 0");
            cfg.threads = threads;
        }

        if (app.got_subcommand(synth)) return thinprice::run_synth(cfg);
        if (app.got_subcommand(screen)) return thinprice::run_screen(cfg);
        if (app.got_subcommand(prevalence)) return thinprice::run_prevalence(cfg);
        if (app.got_subcommand(analyze)) return thinprice::run_analyze(cfg);
        if (app.got_subcommand(report)) return thinprice::run_report(cfg);
        if (app.got_subcommand(run)) return thinprice::run_full(cfg);
    } catch (const std::exception& e) {
        thinprice::log::error(e.what());
        return code_for(e);
    }
    return 1;
}
