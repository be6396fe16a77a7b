#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nesy/bnn.hpp"
#include "nesy/data.hpp"
#include "nesy/hybrid.hpp"
#include "nesy/symbolic.hpp"

namespace nesy {

struct SplitFractions {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;

    void validate() const;
};

struct NoiseParams {
    double feature_sigma_scale = 0.1;
    double categorical_flip_p = 0.05;
    double label_flip_p = 0.1;

    void validate() const;
    bool is_zero() const noexcept { return feature_sigma_scale == 0.0 && categorical_flip_p == 0.0 && label_flip_p == 0.0; }
};

struct ExperimentConfig {
    SplitFractions split;
    std::vector<double> scarcity_fractions{0.9, 0.5, 0.1};
    NoiseParams noise;
    double threshold = 0.30;
    double tau_p = 0.05;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<int> windows{1, 2, 3};
    std::vector<double> sweep_thresholds{0.10, 0.19, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.60, 0.70, 0.80, 0.90};

    ModelShape shape;
    TrainConfig train;
    TreeParams tree;

    void validate() const;
};

struct TemporalSplit {
    Dataset train, validation, test;
    std::size_t dropped_boundary = 0;  // examples whose targets reach into the next partition
};

/// Per segment: the earliest round(0.8 n) examples train, the next round(0.1 n) validate, the rest test.
/// Examples whose last target slot falls at or after the first slot of the following partition are dropped.
/// All three partitions keep the input schema.
TemporalSplit temporal_split(const Dataset& ds, const SplitFractions& fractions = {});

/// Uniform sample of round(fraction * n) examples without replacement, original order kept.
Dataset subsample_training(const Dataset& train, double fraction, std::uint64_t seed);

/// Population stddev per continuous feature (names from `continuous_feature_names`).
struct FeatureSpread {
    std::vector<std::string> names;
    std::vector<double> stddev;
};
FeatureSpread feature_spread(std::span<const LabeledExample> examples, int lag_depth);

/// Gaussian perturbation of ratios and weather measurements (sd = scale x spread), uniform resampling
/// of hour, day, month, holiday and weather type, and label replacement by a different class.
/// `spread` defaults to that of `ds` itself.
Dataset inject_noise(const Dataset& ds, const NoiseParams& params, std::uint64_t seed,
                     const std::optional<FeatureSpread>& spread = std::nullopt, bool corrupt_labels = true);

double compute_accuracy(std::span<const OccupancyClass> pred, std::span<const OccupancyClass> truth);
double compute_accuracy_at_1(std::span<const OccupancyClass> pred, std::span<const OccupancyClass> truth);
/// Fraction of outcomes not decided by the confident neural path.
double compute_deferral_rate(std::span<const PredictionOutcome> outcomes);

inline const std::vector<std::string> kModels{"bnn", "symbolic", "method1", "method2", "persistence"};

enum class Suite { Baseline, Scarcity, Noise, Sweep, All };
Suite suite_from_name(std::string_view name);

struct CellResult {
    std::string model, condition;
    int window = 1;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double accuracy_at_1 = 0.0;
    double deferral = 0.0;
    std::size_t n = 0;
};

struct MetricsRow {
    std::string model, condition;
    int window = 1;
    std::size_t seed_count = 0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double acc_at_1_mean = 0.0, acc_at_1_std = 0.0;
    double deferral_mean = 0.0;
    std::size_t n = 0;
};

struct SweepCell {
    double threshold = 0.0;
    int window = 1;
    std::uint64_t seed = 0;
    double deferral = 0.0;
    std::optional<double> selective_accuracy;  // accuracy on the confidently predicted subset
    double method1_accuracy = 0.0;
    double method2_accuracy = 0.0;
};

struct SweepRow {
    double threshold = 0.0;
    int window = 1;
    std::size_t seed_count = 0;
    double deferral_mean = 0.0;
    std::optional<double> selective_accuracy_mean;
    double method1_accuracy_mean = 0.0;
    double method2_accuracy_mean = 0.0;
};

struct CellFailure {
    std::string condition;
    int window = 1;
    std::uint64_t seed = 0;
    std::string code, message;
};

struct SuiteResult {
    std::vector<CellResult> cells;
    std::vector<MetricsRow> rows;  // canonical order: condition, window, model
    std::vector<SweepCell> sweep_cells;
    std::vector<SweepRow> sweep;
    std::vector<CellFailure> failures;
};

/// Conditions covered by a suite, in report order.
std::vector<std::string> suite_conditions(Suite suite, const ExperimentConfig& config);

/// Runs every (condition, window, seed) cell sequentially in canonical order. A failing cell is
/// recorded and skipped; rows aggregate the seeds that succeeded.
SuiteResult run_suite(const ExperimentConfig& config, const Dataset& data, Suite suite);

std::vector<MetricsRow> aggregate_cells(std::span<const CellResult> cells);
std::vector<SweepRow> aggregate_sweep(std::span<const SweepCell> cells);

void write_report(std::ostream& out, std::span<const MetricsRow> rows);
void write_plot_data(std::ostream& out, std::span<const CellResult> cells);
void write_sweep(std::ostream& out, std::span<const SweepRow> rows);
void write_failures(std::ostream& out, std::span<const CellFailure> failures);

}  // namespace nesy
