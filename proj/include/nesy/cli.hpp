#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nesy/experiments.hpp"
#include "nesy/hybrid.hpp"
#include "nesy/synthetic.hpp"

namespace nesy::cli {

namespace fs = std::filesystem;

/// Where examples come from. `generator` synthesizes in memory from the generator block and
/// the run seed; `slots` assembles slot/weather/holiday files; `dataset` reads a dataset JSON.
struct DataConfig {
    std::string source = "generator";
    fs::path slots, weather, holidays, dataset, events;
    std::map<std::string, int> total_bays;  // ingest: overrides the distinct-bay count per segment
    bool initial_occupied = false;
    int lag_depth = 4;
};

struct PredictConfig {
    fs::path models;  // directory holding model_pw{w}.json / rules_pw{w}.json; defaults to `out`
    fs::path input;   // dataset JSON to score; the configured data's test partition when empty
    int window = 1;
    RefinementMode refinement = RefinementMode::Renormalize;
};

struct RunConfig {
    std::uint64_t seed = 0;
    fs::path out = "out";
    GeneratorConfig generator;
    DataConfig data;
    ExperimentConfig experiment;
    PredictConfig predict;

    void validate() const;
};

/// Layers defaults, the JSON file (if any) and `key.path=value` overrides, in that order.
/// Override values are parsed as JSON when possible and taken as strings otherwise.
RunConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides = {});
RunConfig config_from_json(const std::string& text, const std::vector<std::string>& overrides = {});
/// Effective configuration as JSON (the form written next to every command's outputs).
std::string dump_config(const RunConfig& config);

struct ManifestEntry {
    std::string path;  // relative to the output directory
    std::string fnv1a64;
    std::uintmax_t bytes = 0;
};

struct CommandResult {
    std::vector<ManifestEntry> files;
};

CommandResult cmd_generate(const RunConfig& config);
CommandResult cmd_ingest(const RunConfig& config);
CommandResult cmd_train(const RunConfig& config);
CommandResult cmd_extract_rules(const RunConfig& config);
/// method: bnn | symbolic | m1 | m2 | persistence
CommandResult cmd_predict(const RunConfig& config, const std::string& method);
CommandResult cmd_experiment(const RunConfig& config, Suite suite);
CommandResult cmd_sweep(const RunConfig& config);

/// Every example described by the data block, before any split.
Dataset load_data(const RunConfig& config);

/// Full command-line entry point. Errors go to `err` as one line `error: <code>: <message>`
/// and map to exit codes 2 (config), 3 (data), 4 (integrity).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nesy::cli
