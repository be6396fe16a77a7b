#include "nesy/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "csv.hpp"
#include "nesy/random.hpp"

namespace nesy {

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

// Stream tags keep the per-cell randomness sources independent of each other.
enum StreamTag : std::uint64_t {
    kSubsample = 0x51,
    kNoiseTrain = 0x52,
    kNoiseValidation = 0x53,
    kNoiseTest = 0x54,
    kInit = 0x55,
    kTrain = 0x56,
    kPredict = 0x57,
};

std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t extra = 0) {
    return mix64(mix64(seed ^ (tag << 40)) + extra);
}

}  // namespace

void SplitFractions::validate() const {
    for (double f : {train, validation, test}) {
        if (!(f > 0.0 && f <= 1.0)) throw config_error("split fractions must lie in (0,1]");
    }
    if (std::abs(train + validation + test - 1.0) > 1e-9) throw config_error("split fractions must sum to 1");
}

void NoiseParams::validate() const {
    if (!(feature_sigma_scale >= 0.0)) throw config_error("noise.feature_sigma_scale must be nonnegative");
    if (!is_probability(categorical_flip_p) || !is_probability(label_flip_p)) {
        throw config_error("noise flip probabilities must lie in [0,1]");
    }
}

void ExperimentConfig::validate() const {
    split.validate();
    noise.validate();
    for (double f : scarcity_fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw config_error("scarcity fractions must lie in (0,1]");
    }
    if (!is_probability(threshold)) throw config_error("threshold must lie in [0,1]");
    if (!(tau_p >= 0.0 && tau_p < 1.0)) throw config_error("tau_p must lie in [0,1)");
    if (seeds.empty()) throw config_error("at least one seed is required");
    if (windows.empty()) throw config_error("at least one window is required");
    for (int w : windows) {
        if (w < 1 || w > static_cast<int>(kNumWindows)) throw config_error(fmt::format("window {} is not in 1..3", w));
    }
    for (double t : sweep_thresholds) {
        if (!is_probability(t)) throw config_error("sweep thresholds must lie in [0,1]");
    }
    train.validate();
}

TemporalSplit temporal_split(const Dataset& ds, const SplitFractions& fractions) {
    fractions.validate();
    std::map<std::string, std::vector<const LabeledExample*>> by_segment;
    for (const auto& ex : ds.examples) by_segment[ex.segment_id].push_back(&ex);

    TemporalSplit out;
    out.train.schema = out.validation.schema = out.test.schema = ds.schema;
    const auto horizon = kSlotLength * static_cast<int>(kNumWindows);
    for (auto& [segment, exs] : by_segment) {
        std::stable_sort(exs.begin(), exs.end(),
                         [](const LabeledExample* a, const LabeledExample* b) { return a->slot_start < b->slot_start; });
        const auto n = static_cast<double>(exs.size());
        const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * n));
        const auto n_val = static_cast<std::size_t>(std::llround(fractions.validation * n));
        if (n_train == 0 || n_val == 0 || n_train + n_val >= exs.size()) {
            throw data_error(fmt::format("segment {} has too few examples ({}) for a temporal split", segment,
                                         exs.size()));
        }
        const Timestamp val_start = exs[n_train]->slot_start;
        const Timestamp test_start = exs[n_train + n_val]->slot_start;
        for (std::size_t i = 0; i < exs.size(); ++i) {
            const LabeledExample& ex = *exs[i];
            const Timestamp last_target = ex.slot_start + horizon;
            if (i < n_train) {
                if (last_target >= val_start) ++out.dropped_boundary;
                else out.train.examples.push_back(ex);
            } else if (i < n_train + n_val) {
                if (last_target >= test_start) ++out.dropped_boundary;
                else out.validation.examples.push_back(ex);
            } else {
                out.test.examples.push_back(ex);
            }
        }
    }
    if (out.train.examples.empty() || out.validation.examples.empty() || out.test.examples.empty()) {
        throw data_error("temporal split produced an empty partition");
    }
    return out;
}

Dataset subsample_training(const Dataset& train, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw config_error("subsample fraction must lie in (0,1]");
    if (fraction == 1.0) return train;
    const std::size_t n = train.examples.size();
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = derived_stream(seed, kSubsample);
    // Partial Fisher-Yates: the first `keep` slots are a uniform sample without replacement.
    for (std::size_t i = 0; i < keep; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.schema = train.schema;
    out.examples.reserve(keep);
    for (auto i : idx) out.examples.push_back(train.examples[i]);
    return out;
}

FeatureSpread feature_spread(std::span<const LabeledExample> examples, int lag_depth) {
    FeatureSpread s;
    s.names = continuous_feature_names(lag_depth);
    s.stddev.assign(s.names.size(), 0.0);
    if (examples.empty()) return s;
    const auto n = static_cast<double>(examples.size());
    for (std::size_t j = 0; j < s.names.size(); ++j) {
        double mean = 0.0;
        for (const auto& ex : examples) mean += continuous_value(ex.features, s.names[j]);
        mean /= n;
        double ss = 0.0;
        for (const auto& ex : examples) {
            const double d = continuous_value(ex.features, s.names[j]) - mean;
            ss += d * d;
        }
        s.stddev[j] = std::sqrt(ss / n);
    }
    return s;
}

Dataset inject_noise(const Dataset& ds, const NoiseParams& params, std::uint64_t seed,
                     const std::optional<FeatureSpread>& spread, bool corrupt_labels) {
    params.validate();
    if (params.is_zero()) return ds;
    const int lag = ds.schema.lag_depth;
    const FeatureSpread sp = spread ? *spread : feature_spread(ds.examples, lag);
    auto sd = [&](std::string_view name) {
        for (std::size_t j = 0; j < sp.names.size(); ++j) {
            if (sp.names[j] == name) return sp.stddev[j] * params.feature_sigma_scale;
        }
        throw dimension_error(fmt::format("feature spread lacks '{}'", name));
    };
    const double sd_ratio = sd("current_ratio");
    std::vector<double> sd_past;
    for (int k = 1; k <= lag; ++k) sd_past.push_back(sd(fmt::format("past_ratio_{}", k)));
    const double sd_temp = sd("temperature_c"), sd_wind = sd("wind_kmh"), sd_rain = sd("rainfall_mm");

    Dataset out = ds;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i < out.examples.size(); ++i) {
        Rng rng = derived_stream(seed, i);
        gauss.reset();
        auto& ex = out.examples[i];
        auto& f = ex.features;
        if (f.past_ratios.size() != static_cast<std::size_t>(lag)) {
            throw dimension_error("example lag depth does not match the dataset schema");
        }
        f.current_ratio = std::clamp(f.current_ratio + sd_ratio * gauss(rng), 0.0, 1.0);
        for (int k = 0; k < lag; ++k) {
            auto& r = f.past_ratios[static_cast<std::size_t>(k)];
            r = std::clamp(r + sd_past[static_cast<std::size_t>(k)] * gauss(rng), 0.0, 1.0);
        }
        f.temperature_c += sd_temp * gauss(rng);
        f.wind_kmh = std::max(0.0, f.wind_kmh + sd_wind * gauss(rng));
        f.rainfall_mm = std::max(0.0, f.rainfall_mm + sd_rain * gauss(rng));

        auto resample = [&](int lo, int hi, int current) {
            if (u01(rng) >= params.categorical_flip_p) return current;
            return std::uniform_int_distribution<int>(lo, hi)(rng);
        };
        f.hour = resample(0, 23, f.hour);
        f.day_of_week = resample(0, 6, f.day_of_week);
        f.month = resample(1, 12, f.month);
        f.is_holiday = resample(0, 1, f.is_holiday ? 1 : 0) == 1;
        f.weather_type = static_cast<WeatherType>(resample(0, kNumWeatherTypes - 1, static_cast<int>(f.weather_type)));

        if (corrupt_labels) {
            for (auto& t : ex.targets) {
                if (u01(rng) >= params.label_flip_p) continue;
                const int shift = std::uniform_int_distribution<int>(1, static_cast<int>(kNumClasses) - 1)(rng);
                t = class_from_index((index_of(t) + shift) % static_cast<int>(kNumClasses));
            }
        }
    }
    return out;
}

namespace {

void check_lengths(std::span<const OccupancyClass> pred, std::span<const OccupancyClass> truth) {
    if (pred.size() != truth.size()) {
        throw dimension_error(fmt::format("prediction count {} differs from truth count {}", pred.size(), truth.size()));
    }
    if (pred.empty()) throw data_error("metrics need at least one prediction");
}

}  // namespace

double compute_accuracy(std::span<const OccupancyClass> pred, std::span<const OccupancyClass> truth) {
    check_lengths(pred, truth);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double compute_accuracy_at_1(std::span<const OccupancyClass> pred, std::span<const OccupancyClass> truth) {
    check_lengths(pred, truth);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += std::abs(index_of(pred[i]) - index_of(truth[i])) <= 1;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double compute_deferral_rate(std::span<const PredictionOutcome> outcomes) {
    if (outcomes.empty()) throw data_error("deferral rate needs at least one outcome");
    const auto deferred = std::count_if(outcomes.begin(), outcomes.end(),
                                        [](const PredictionOutcome& o) { return o.source != DecisionSource::Neural; });
    return static_cast<double>(deferred) / static_cast<double>(outcomes.size());
}

Suite suite_from_name(std::string_view name) {
    if (name == "baseline") return Suite::Baseline;
    if (name == "scarcity") return Suite::Scarcity;
    if (name == "noise") return Suite::Noise;
    if (name == "sweep") return Suite::Sweep;
    if (name == "all") return Suite::All;
    throw config_error(fmt::format("unknown suite '{}' (expected baseline, scarcity, noise, sweep or all)", name));
}

namespace {

std::string fraction_label(double f) { return fmt::format("{:g}", f); }

}  // namespace

std::vector<std::string> suite_conditions(Suite suite, const ExperimentConfig& config) {
    std::vector<std::string> out;
    if (suite == Suite::Baseline || suite == Suite::Sweep || suite == Suite::All) out.push_back("full");
    if (suite == Suite::Scarcity || suite == Suite::All) {
        for (double f : config.scarcity_fractions) out.push_back(fraction_label(f));
    }
    if (suite == Suite::Noise || suite == Suite::All) out.push_back("noisy");
    return out;
}

namespace {

struct CellData {
    std::vector<LabeledExample> train, validation, test;
};

CellData cell_data(const TemporalSplit& split, const ExperimentConfig& cfg, const std::string& condition,
                   std::uint64_t seed) {
    CellData d;
    if (condition == "full") {
        d.train = split.train.examples;
    } else if (condition == "noisy") {
        const int lag = split.train.schema.lag_depth;
        const FeatureSpread spread = feature_spread(split.train.examples, lag);
        d.train = inject_noise(split.train, cfg.noise, cell_seed(seed, kNoiseTrain), spread, true).examples;
        d.validation = inject_noise(split.validation, cfg.noise, cell_seed(seed, kNoiseValidation), spread, true).examples;
        d.test = inject_noise(split.test, cfg.noise, cell_seed(seed, kNoiseTest), spread, false).examples;
        return d;
    } else {
        const double f = std::stod(condition);
        d.train = subsample_training(split.train, f, cell_seed(seed, kSubsample)).examples;
    }
    d.validation = split.validation.examples;
    d.test = split.test.examples;
    return d;
}

struct CellOutput {
    std::vector<CellResult> results;
    std::vector<SweepCell> sweep;
};

CellOutput run_cell(const ExperimentConfig& cfg, const CellData& d, int lag, const std::string& condition,
                    int window, std::uint64_t seed, bool with_sweep) {
    const auto w = static_cast<std::uint64_t>(window);
    const FeatureSchema schema = fit_schema(d.train, lag);

    TrainConfig tc = cfg.train;
    tc.seed = cell_seed(seed, kTrain, w);
    const BnnModel init = make_model(schema, cfg.shape, cell_seed(seed, kInit, w));
    const BnnModel model = train(init, d.train, d.validation, window, tc).model;
    const auto neural = posterior_predictive_batch(model, encode_examples(d.test, schema), tc.mc_predict_samples,
                                                   cell_seed(seed, kPredict, w));

    const RuleBase rules = extract_rules(induce_tree(d.train, window, lag, cfg.tree));

    const std::size_t n = d.test.size();
    std::vector<OccupancyClass> truth(n), bnn(n), sym(n), m1(n), m2(n), pers(n);
    std::vector<PredictionOutcome> out_bnn(n), out_m1(n), out_m2(n);
    std::vector<RuleMatch> matches(n);
    const auto wi = static_cast<std::size_t>(window - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = d.test[i];
        truth[i] = ex.targets[wi];
        matches[i] = rule_infer(rules, ex.features);
        bnn[i] = neural[i].argmax();
        out_bnn[i].source = confident_prediction(neural[i], cfg.threshold) ? DecisionSource::Neural
                                                                           : DecisionSource::Symbolic;
        sym[i] = matches[i].distribution.argmax();
        out_m1[i] = decide_method1(neural[i], matches[i], cfg.threshold);
        out_m2[i] = decide_method2(neural[i], matches[i], cfg.threshold, cfg.tau_p);
        m1[i] = out_m1[i].predicted;
        m2[i] = out_m2[i].predicted;
        pers[i] = predict_persistence(ex.features);
    }

    CellOutput out;
    auto add = [&](const std::string& model, const std::vector<OccupancyClass>& pred, double deferral) {
        out.results.push_back({model, condition, window, seed, compute_accuracy(pred, truth),
                               compute_accuracy_at_1(pred, truth), deferral, n});
    };
    add("bnn", bnn, compute_deferral_rate(out_bnn));
    add("symbolic", sym, 1.0);
    add("method1", m1, compute_deferral_rate(out_m1));
    add("method2", m2, compute_deferral_rate(out_m2));
    add("persistence", pers, 0.0);

    if (with_sweep) {
        for (double t : cfg.sweep_thresholds) {
            SweepCell c;
            c.threshold = t;
            c.window = window;
            c.seed = seed;
            std::size_t accepted = 0, accepted_hits = 0, hits1 = 0, hits2 = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (auto p = confident_prediction(neural[i], t)) {
                    ++accepted;
                    accepted_hits += *p == truth[i];
                }
                hits1 += decide_method1(neural[i], matches[i], t).predicted == truth[i];
                hits2 += decide_method2(neural[i], matches[i], t, cfg.tau_p).predicted == truth[i];
            }
            const auto nd = static_cast<double>(n);
            c.deferral = static_cast<double>(n - accepted) / nd;
            if (accepted > 0) c.selective_accuracy = static_cast<double>(accepted_hits) / static_cast<double>(accepted);
            c.method1_accuracy = static_cast<double>(hits1) / nd;
            c.method2_accuracy = static_cast<double>(hits2) / nd;
            out.sweep.push_back(c);
        }
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<MetricsRow> aggregate_cells(std::span<const CellResult> cells) {
    // Group in first-appearance order of (condition, window), models in canonical order.
    std::vector<std::pair<std::string, int>> keys;
    for (const auto& c : cells) {
        std::pair<std::string, int> k{c.condition, c.window};
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    std::vector<MetricsRow> rows;
    for (const auto& [condition, window] : keys) {
        for (const auto& model : kModels) {
            std::vector<double> acc, acc1, def;
            std::size_t n = 0;
            for (const auto& c : cells) {
                if (c.condition != condition || c.window != window || c.model != model) continue;
                acc.push_back(c.accuracy);
                acc1.push_back(c.accuracy_at_1);
                def.push_back(c.deferral);
                n = c.n;
            }
            if (acc.empty()) continue;
            rows.push_back({model, condition, window, acc.size(), mean_of(acc), sample_std(acc), mean_of(acc1),
                            sample_std(acc1), mean_of(def), n});
        }
    }
    return rows;
}

std::vector<SweepRow> aggregate_sweep(std::span<const SweepCell> cells) {
    std::vector<std::pair<int, double>> keys;
    for (const auto& c : cells) {
        std::pair<int, double> k{c.window, c.threshold};
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    std::sort(keys.begin(), keys.end());
    std::vector<SweepRow> rows;
    for (const auto& [window, t] : keys) {
        std::vector<double> def, sel, a1, a2;
        for (const auto& c : cells) {
            if (c.window != window || c.threshold != t) continue;
            def.push_back(c.deferral);
            if (c.selective_accuracy) sel.push_back(*c.selective_accuracy);
            a1.push_back(c.method1_accuracy);
            a2.push_back(c.method2_accuracy);
        }
        SweepRow r;
        r.threshold = t;
        r.window = window;
        r.seed_count = def.size();
        r.deferral_mean = mean_of(def);
        if (!sel.empty()) r.selective_accuracy_mean = mean_of(sel);
        r.method1_accuracy_mean = mean_of(a1);
        r.method2_accuracy_mean = mean_of(a2);
        rows.push_back(r);
    }
    return rows;
}

SuiteResult run_suite(const ExperimentConfig& config, const Dataset& data, Suite suite) {
    config.validate();
    const TemporalSplit split = temporal_split(data, config.split);
    SuiteResult result;
    for (const auto& condition : suite_conditions(suite, config)) {
        const bool sweep = condition == "full" && (suite == Suite::Sweep || suite == Suite::All);
        for (int window : config.windows) {
            for (auto seed : config.seeds) {
                try {
                    const CellData d = cell_data(split, config, condition, seed);
                    CellOutput out = run_cell(config, d, data.schema.lag_depth, condition, window, seed, sweep);
                    result.cells.insert(result.cells.end(), out.results.begin(), out.results.end());
                    result.sweep_cells.insert(result.sweep_cells.end(), out.sweep.begin(), out.sweep.end());
                } catch (const Error& e) {
                    result.failures.push_back({condition, window, seed, std::string(error_code(e.kind())), e.what()});
                }
            }
        }
    }
    result.rows = aggregate_cells(result.cells);
    result.sweep = aggregate_sweep(result.sweep_cells);
    return result;
}

namespace {

std::string num(double x) { return fmt::format("{:.6f}", x); }

}  // namespace

void write_report(std::ostream& out, std::span<const MetricsRow> rows) {
    out << "model,condition,window,seed_count,accuracy_mean,accuracy_std,acc_at_1_mean,acc_at_1_std,deferral_mean,n\n";
    for (const auto& r : rows) {
        out << fmt::format("{},{},PW{},{},{},{},{},{},{},{}\n", r.model, r.condition, r.window, r.seed_count,
                           num(r.accuracy_mean), num(r.accuracy_std), num(r.acc_at_1_mean), num(r.acc_at_1_std),
                           num(r.deferral_mean), r.n);
    }
}

void write_plot_data(std::ostream& out, std::span<const CellResult> cells) {
    out << "model,condition,window,seed,metric,value\n";
    for (const auto& c : cells) {
        for (const auto& [metric, v] : {std::pair<const char*, double>{"accuracy", c.accuracy},
                                        {"acc_at_1", c.accuracy_at_1},
                                        {"deferral", c.deferral}}) {
            out << fmt::format("{},{},PW{},{},{},{}\n", c.model, c.condition, c.window, c.seed, metric, num(v));
        }
    }
}

void write_sweep(std::ostream& out, std::span<const SweepRow> rows) {
    out << "threshold,window,seed_count,deferral_mean,selective_accuracy_mean,method1_accuracy_mean,"
           "method2_accuracy_mean\n";
    for (const auto& r : rows) {
        out << fmt::format("{:.2f},PW{},{},{},{},{},{}\n", r.threshold, r.window, r.seed_count, num(r.deferral_mean),
                           r.selective_accuracy_mean ? num(*r.selective_accuracy_mean) : std::string{},
                           num(r.method1_accuracy_mean), num(r.method2_accuracy_mean));
    }
}

void write_failures(std::ostream& out, std::span<const CellFailure> failures) {
    out << "condition,window,seed,code,message\n";
    for (const auto& f : failures) {
        out << fmt::format("{},PW{},{},{},{}\n", f.condition, f.window, f.seed, f.code, csv::sanitize(f.message));
    }
}

}  // namespace nesy
