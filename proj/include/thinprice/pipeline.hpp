#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "thinprice/dataset.hpp"
#include "thinprice/synth.hpp"

namespace thinprice {

inline constexpr const char* kToolName = "thinprice";
inline constexpr const char* kToolVersion = "0.1.0";

struct InputSpec {
    enum class Kind { csv, synthetic };
    Kind kind = Kind::csv;
    std::filesystem::path csv_path;
    CsvSchema schema;
    SynthConfig synth;
    GroundTruth truth;
};

struct RunConfig {
    InputSpec input;
    std::vector<int> items;  // empty = every item surviving the screen
    std::vector<double> q_levels{0.5, 0.4, 0.3};
    int repetitions = 1000;
    double alpha = 0.05;
    double meta_alpha = 0.05;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir = "out";
    ScreeningRules screening;
    std::size_t exact_cap = 20000;
    int threads = 1;
    bool audit_selections = false;  // dump per-repetition selected households
};

RunConfig load_run_config(const std::filesystem::path& path);

// Every constraint violation (empty = valid). run_* refuse invalid configs.
std::vector<std::string> validate_config(const RunConfig& config);

// Pipeline stages; each returns a process exit code (0 ok, 1 config error,
// 2 data error, 3 numerical error) and writes artifacts under output_dir.
// run_full = screen + prevalence + analyze + manifest. A failure scoped to
// one item is recorded in the manifest and does not discard the others.
int run_synth(const RunConfig& config);
int run_screen(const RunConfig& config);
int run_prevalence(const RunConfig& config);
int run_analyze(const RunConfig& config);
int run_report(const RunConfig& config);
int run_full(const RunConfig& config);

// Writes via a temp file + rename so interrupted runs never leave a torn file.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

}  // namespace thinprice
