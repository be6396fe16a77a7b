#include <doctest.h>

#include <sstream>

#include "nesy/experiments.hpp"
#include "nesy/synthetic.hpp"
#include "oracles.hpp"

using namespace nesy;
using namespace std::chrono_literals;

namespace {

std::vector<OccupancyClass> classes(std::initializer_list<int> idx) {
    std::vector<OccupancyClass> out;
    for (int i : idx) out.push_back(class_from_index(i));
    return out;
}

// One segment of n examples spaced `step` apart.
Dataset toy_series(std::size_t n, std::chrono::seconds step, const std::string& segment = "a") {
    Rng rng(3);
    Dataset ds;
    auto exs = oracle::random_examples(n, rng);
    const Timestamp t0 = *parse_timestamp("2020-01-06 00:00");
    for (std::size_t i = 0; i < n; ++i) {
        exs[i].segment_id = segment;
        exs[i].slot_start = t0 + step * static_cast<int>(i);
    }
    ds.examples = std::move(exs);
    ds.schema = fit_schema(ds.examples, 4);
    return ds;
}

Dataset small_synthetic(std::uint64_t seed) {
    GeneratorConfig g;
    g.segments = 2;
    g.days = 10;
    const auto syn = generate_synthetic(g, seed);
    return assemble_dataset(syn.slots, syn.context, 4).dataset;
}

ExperimentConfig quick_config() {
    ExperimentConfig c;
    c.seeds = {1, 2};
    c.windows = {1};
    c.shape.hidden = {8};
    c.train.max_epochs = 3;
    c.train.mc_predict_samples = 10;
    c.sweep_thresholds = {0.1, 0.3, 0.6, 0.9};
    return c;
}

}  // namespace

TEST_CASE("accuracy metrics on hand examples") {
    const auto truth = classes({2, 2, 2, 2});
    CHECK(compute_accuracy(classes({2, 3, 0, 2}), truth) == 0.5);
    CHECK(compute_accuracy_at_1(classes({0, 1, 4, 3}), classes({1, 1, 2, 4})) == 0.75);
    CHECK(compute_accuracy_at_1(classes({2, 3, 0, 2}), truth) == 0.75);
    CHECK_THROWS_AS(compute_accuracy(classes({1}), truth), Error);
    CHECK_THROWS_AS(compute_accuracy({}, {}), Error);

    Rng rng(8);
    std::uniform_int_distribution<int> c(0, 4);
    for (int t = 0; t < 100; ++t) {
        std::vector<OccupancyClass> p, y;
        for (int i = 0; i < 50; ++i) {
            p.push_back(class_from_index(c(rng)));
            y.push_back(class_from_index(c(rng)));
        }
        CHECK(compute_accuracy_at_1(p, y) >= compute_accuracy(p, y));
    }
}

TEST_CASE("deferral rate counts non-neural outcomes") {
    std::vector<PredictionOutcome> o(4);
    o[1].source = DecisionSource::Symbolic;
    o[2].source = DecisionSource::NeuralRefined;
    CHECK(compute_deferral_rate(o) == 0.5);
    CHECK_THROWS_AS(compute_deferral_rate({}), Error);
}

TEST_CASE("temporal split proportions") {
    const auto ds = toy_series(100, 1h);
    const auto s = temporal_split(ds);
    CHECK(s.train.examples.size() == 80);
    CHECK(s.validation.examples.size() == 10);
    CHECK(s.test.examples.size() == 10);
    CHECK(s.dropped_boundary == 0);
    CHECK(s.train.examples.back().slot_start < s.validation.examples.front().slot_start);
    CHECK(s.validation.examples.back().slot_start < s.test.examples.front().slot_start);
    CHECK(s.test.schema == ds.schema);
}

TEST_CASE("temporal split drops examples whose targets cross a boundary") {
    const auto s = temporal_split(toy_series(40, kSlotLength));
    // 32 / 4 / 4 before filtering; the last three of train and validation see past their partition.
    CHECK(s.train.examples.size() == 29);
    CHECK(s.validation.examples.size() == 1);
    CHECK(s.test.examples.size() == 4);
    CHECK(s.dropped_boundary == 6);
    for (const auto& ex : s.train.examples) {
        CHECK(ex.slot_start + 3 * kSlotLength < toy_series(40, kSlotLength).examples[32].slot_start);
    }

    CHECK_THROWS_AS(temporal_split(toy_series(12, kSlotLength)), Error);
    CHECK_THROWS_AS(temporal_split(toy_series(100, 1h), SplitFractions{0.5, 0.1, 0.1}), Error);
}

TEST_CASE("temporal split works per segment") {
    auto a = toy_series(50, 1h, "a"), b = toy_series(30, 1h, "b");
    Dataset ds = a;
    ds.examples.insert(ds.examples.end(), b.examples.begin(), b.examples.end());
    const auto s = temporal_split(ds);
    CHECK(s.train.examples.size() == 40 + 24);
    CHECK(s.validation.examples.size() == 5 + 3);
    CHECK(s.test.examples.size() == 5 + 3);
}

TEST_CASE("training subsample") {
    const auto ds = toy_series(200, 1h);
    const auto half = subsample_training(ds, 0.5, 4);
    CHECK(half.examples.size() == 100);
    for (std::size_t i = 1; i < half.examples.size(); ++i) {
        CHECK(half.examples[i - 1].slot_start < half.examples[i].slot_start);
    }
    CHECK(subsample_training(ds, 0.5, 4) == half);
    CHECK(subsample_training(ds, 0.5, 5) != half);
    CHECK(subsample_training(ds, 1.0, 4) == ds);
    CHECK(subsample_training(ds, 0.1, 4).examples.size() == 20);
    CHECK_THROWS_AS(subsample_training(ds, 0.0, 4), Error);
    CHECK_THROWS_AS(subsample_training(ds, 1.5, 4), Error);
}

TEST_CASE("noise injection rates") {
    const auto ds = toy_series(10000, kSlotLength);
    NoiseParams p;
    const auto noisy = inject_noise(ds, p, 9);
    std::size_t flipped = 0, hours = 0, targets = 0;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        for (std::size_t w = 0; w < kNumWindows; ++w) {
            ++targets;
            flipped += noisy.examples[i].targets[w] != ds.examples[i].targets[w];
        }
        hours += noisy.examples[i].features.hour != ds.examples[i].features.hour;
        CHECK(noisy.examples[i].features.current_ratio >= 0.0);
        CHECK(noisy.examples[i].features.current_ratio <= 1.0);
        CHECK(noisy.examples[i].features.rainfall_mm >= 0.0);
    }
    const double label_rate = static_cast<double>(flipped) / static_cast<double>(targets);
    CHECK(label_rate == doctest::Approx(0.1).epsilon(0.1));  // 0.1 +- 0.01
    const double hour_rate = static_cast<double>(hours) / static_cast<double>(ds.examples.size());
    CHECK(hour_rate == doctest::Approx(0.05 * 23.0 / 24.0).epsilon(0.15));

    // Wind perturbation has sd 0.1 x spread; clipping at zero is rare for this toy range.
    const auto spread = feature_spread(ds.examples, 4);
    double ss = 0.0;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        const double d = noisy.examples[i].features.wind_kmh - ds.examples[i].features.wind_kmh;
        ss += d * d;
    }
    const auto wind = std::find(spread.names.begin(), spread.names.end(), "wind_kmh") - spread.names.begin();
    CHECK(std::sqrt(ss / 1e4) == doctest::Approx(0.1 * spread.stddev[static_cast<std::size_t>(wind)]).epsilon(0.1));

    CHECK(inject_noise(ds, p, 9) == noisy);
    CHECK(inject_noise(ds, NoiseParams{0, 0, 0}, 9) == ds);

    const auto clean_labels = inject_noise(ds, p, 9, std::nullopt, false);
    for (std::size_t i = 0; i < ds.examples.size(); ++i) CHECK(clean_labels.examples[i].targets == ds.examples[i].targets);

    CHECK_THROWS_AS(inject_noise(ds, NoiseParams{0.1, 1.5, 0.1}, 9), Error);
}

TEST_CASE("suite conditions") {
    const ExperimentConfig c;
    CHECK(suite_conditions(Suite::Baseline, c) == std::vector<std::string>{"full"});
    CHECK(suite_conditions(Suite::Scarcity, c) == std::vector<std::string>{"0.9", "0.5", "0.1"});
    CHECK(suite_conditions(Suite::Noise, c) == std::vector<std::string>{"noisy"});
    CHECK(suite_conditions(Suite::All, c).size() == 5);
    CHECK(suite_from_name("sweep") == Suite::Sweep);
    CHECK_THROWS_AS(suite_from_name("everything"), Error);
}

TEST_CASE("baseline suite on a small synthetic set") {
    const auto data = small_synthetic(3);
    const auto cfg = quick_config();
    const auto r = run_suite(cfg, data, Suite::Sweep);
    CHECK(r.failures.empty());
    CHECK(r.cells.size() == kModels.size() * cfg.seeds.size());
    REQUIRE(r.rows.size() == kModels.size());
    for (std::size_t i = 0; i < kModels.size(); ++i) {
        CHECK(r.rows[i].model == kModels[i]);
        CHECK(r.rows[i].seed_count == 2);
        CHECK(r.rows[i].acc_at_1_mean >= r.rows[i].accuracy_mean);
    }
    CHECK(r.rows[1].deferral_mean == 1.0);
    CHECK(r.rows[4].deferral_mean == 0.0);
    CHECK(r.rows[2].deferral_mean == r.rows[0].deferral_mean);
    CHECK(r.rows[3].deferral_mean == r.rows[0].deferral_mean);

    REQUIRE(r.sweep.size() == cfg.sweep_thresholds.size());
    for (std::size_t i = 1; i < r.sweep.size(); ++i) CHECK(r.sweep[i].deferral_mean >= r.sweep[i - 1].deferral_mean);

    CHECK(run_suite(cfg, data, Suite::Sweep).cells.size() == r.cells.size());
    const auto again = run_suite(cfg, data, Suite::Sweep);
    for (std::size_t i = 0; i < r.cells.size(); ++i) CHECK(again.cells[i].accuracy == r.cells[i].accuracy);
}

TEST_CASE("aggregation and writers") {
    std::vector<CellResult> cells{{"bnn", "full", 1, 1, 0.5, 0.8, 0.2, 10},
                                  {"bnn", "full", 1, 2, 0.7, 0.9, 0.4, 10},
                                  {"symbolic", "full", 1, 1, 0.6, 0.9, 1.0, 10}};
    const auto rows = aggregate_cells(cells);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].accuracy_mean == doctest::Approx(0.6));
    CHECK(rows[0].accuracy_std == doctest::Approx(std::sqrt(0.02)));
    CHECK(rows[1].seed_count == 1);
    CHECK(rows[1].accuracy_std == 0.0);

    std::ostringstream report, plot;
    write_report(report, rows);
    CHECK(report.str() ==
          "model,condition,window,seed_count,accuracy_mean,accuracy_std,acc_at_1_mean,acc_at_1_std,deferral_mean,n\n"
          "bnn,full,PW1,2,0.600000,0.141421,0.850000,0.070711,0.300000,10\n"
          "symbolic,full,PW1,1,0.600000,0.000000,0.900000,0.000000,1.000000,10\n");
    write_plot_data(plot, cells);
    const std::string plot_text = plot.str();
    CHECK(std::count(plot_text.begin(), plot_text.end(), '\n') == 1 + 3 * 3);

    std::vector<SweepCell> sc{{0.3, 1, 1, 0.2, 0.9, 0.6, 0.62}, {0.3, 1, 2, 0.4, std::nullopt, 0.5, 0.52}};
    const auto sw = aggregate_sweep(sc);
    REQUIRE(sw.size() == 1);
    CHECK(sw[0].deferral_mean == doctest::Approx(0.3));
    CHECK(*sw[0].selective_accuracy_mean == doctest::Approx(0.9));
    std::ostringstream sweep;
    write_sweep(sweep, sw);
    CHECK(sweep.str().find("0.30,PW1,2,0.300000,0.900000,0.550000,0.570000\n") != std::string::npos);

    std::ostringstream fail;
    write_failures(fail, std::vector<CellFailure>{{"0.1", 2, 3, "data_error", "bad, very\nbad"}});
    CHECK(fail.str() == "condition,window,seed,code,message\n0.1,PW2,3,data_error,bad; very bad\n");
}
