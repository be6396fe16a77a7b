#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <map>
#include <set>

#include "nesy/symbolic.hpp"
#include "oracles.hpp"

using namespace nesy;

namespace {

LabeledExample labeled(FeatureVector f, OccupancyClass c) {
    LabeledExample ex;
    ex.features = std::move(f);
    ex.targets = {c, c, c};
    ex.segment_id = "s";
    return ex;
}

FeatureVector at_hour(int h) {
    FeatureVector f;
    f.past_ratios = {0.1, 0.1, 0.1, 0.1};
    f.hour = h;
    f.month = 3;
    return f;
}

double gini(const std::map<int, std::size_t>& counts) {
    double n = 0.0, s = 0.0;
    for (auto [k, c] : counts) n += static_cast<double>(c);
    for (auto [k, c] : counts) s += (c / n) * (c / n);
    return 1.0 - s;
}

// Exhaustive search over every threshold and single-value test the engine can express.
double brute_force_best_gain(const std::vector<LabeledExample>& data, std::size_t min_leaf) {
    std::map<int, std::size_t> all;
    for (const auto& ex : data) ++all[index_of(ex.targets[0])];
    const double n = static_cast<double>(data.size());
    const double g0 = gini(all);
    double best = 0.0;
    for (const auto& info : rule_features(4)) {
        std::set<double> values;
        for (const auto& ex : data) values.insert(rule_feature_value(ex.features, info.name));
        std::vector<std::function<bool(double)>> tests;
        if (info.kind == FeatureKind::Continuous) {
            for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
                const double t = (*it + *std::next(it)) / 2.0;
                tests.push_back([t](double v) { return v <= t; });
            }
        } else {
            for (double v0 : values) tests.push_back([v0](double v) { return v == v0; });
        }
        for (const auto& test : tests) {
            std::map<int, std::size_t> l, r;
            std::size_t nl = 0;
            for (const auto& ex : data) {
                const bool left = test(rule_feature_value(ex.features, info.name));
                ++(left ? l : r)[index_of(ex.targets[0])];
                nl += left;
            }
            if (nl < min_leaf || data.size() - nl < min_leaf) continue;
            const double w = (nl / n) * gini(l) + ((n - nl) / n) * gini(r);
            best = std::max(best, g0 - w);
        }
    }
    return best;
}

const char* kRainRule = R"({
  "window": 1,
  "rules": [
    {"id": "rain_high", "conditions": [{"feature": "rainfall_mm", "op": "gt", "value": 1.0},
                                        {"feature": "prev_occ", "op": "eq", "value": "VeryHigh"}],
     "distribution": [0.05, 0.05, 0.1, 0.6, 0.2], "support": 12},
    {"id": "default", "conditions": [], "distribution": [0.2, 0.2, 0.2, 0.2, 0.2]}
  ]
})";

}  // namespace

TEST_CASE("gini impurity") {
    CHECK(gini_impurity({1, 1, 1, 1, 1}) == doctest::Approx(0.8));
    CHECK(gini_impurity({0, 0, 7, 0, 0}) == 0.0);
    CHECK(gini_impurity({2, 2, 0, 0, 0}) == doctest::Approx(0.5));
    Rng rng(1);
    std::uniform_int_distribution<std::size_t> c(0, 20);
    for (int i = 0; i < 200; ++i) {
        ClassCounts k{c(rng), c(rng), c(rng), c(rng), c(rng) + 1};
        const double g = gini_impurity(k);
        CHECK(g >= 0.0);
        CHECK(g <= 0.8 + 1e-12);
    }
}

TEST_CASE("pure data gives a single leaf") {
    std::vector<LabeledExample> d;
    for (int h = 0; h < 24; ++h) d.push_back(labeled(at_hour(h), OccupancyClass::Low));
    const auto t = induce_tree(d, 1, 4);
    CHECK(t.nodes.size() == 1);
    CHECK(t.predict(at_hour(3)) == OccupancyClass::Low);
    CHECK_THROWS_AS(induce_tree(std::vector<LabeledExample>{}, 1, 4), Error);
}

TEST_CASE("perfect split on hour <= 11") {
    std::vector<LabeledExample> d;
    for (int rep = 0; rep < 3; ++rep) {
        for (int h = 0; h < 24; ++h) d.push_back(labeled(at_hour(h), h <= 11 ? OccupancyClass::Low : OccupancyClass::High));
    }
    TreeParams p;
    p.min_leaf = 1;
    const auto t = induce_tree(d, 1, 4, p);
    REQUIRE(t.nodes.size() == 3);
    CHECK(t.nodes[0].split->feature == "hour");
    CHECK(t.nodes[0].split->threshold == 11.5);
    CHECK(brute_force_best_gain(d, 1) == doctest::Approx(0.5));

    const auto rb = extract_rules(t);
    REQUIRE(rb.rules.size() == 2);
    CHECK(rb.rules[0].conditions[0] == Condition::le("hour", 11.5));
    CHECK(rb.rules[1].conditions[0] == Condition::gt("hour", 11.5));
    CHECK(rule_infer(rb, at_hour(11)).rule == &rb.rules[0]);  // boundary ownership
    CHECK(rule_infer(rb, at_hour(12)).rule == &rb.rules[1]);
}

TEST_CASE("root split attains the brute-force best gain") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        const auto d = oracle::random_examples(150, rng);
        TreeParams p;
        p.max_depth = 1;
        p.min_leaf = 5;
        const auto t = induce_tree(d, 1, 4, p);
        REQUIRE(t.nodes.size() == 3);
        ClassCounts parent = t.nodes[0].counts;
        const double n = static_cast<double>(d.size());
        auto size = [](const ClassCounts& c) { return static_cast<double>(std::accumulate(c.begin(), c.end(), std::size_t{0})); };
        const auto& l = t.nodes[static_cast<std::size_t>(t.nodes[0].left)].counts;
        const auto& r = t.nodes[static_cast<std::size_t>(t.nodes[0].right)].counts;
        const double gain = gini_impurity(parent) - size(l) / n * gini_impurity(l) - size(r) / n * gini_impurity(r);
        CHECK(gain == doctest::Approx(brute_force_best_gain(d, 5)).epsilon(1e-12));
    }
}

TEST_CASE("tree limits and consistency") {
    Rng rng(7);
    const auto d = oracle::random_examples(600, rng);
    TreeParams p;
    p.max_depth = 4;
    p.min_leaf = 15;
    const auto t = induce_tree(d, 2, 4, p);
    for (const auto& n : t.nodes) {
        CHECK(n.depth <= 4);
        if (n.is_leaf()) CHECK(std::accumulate(n.counts.begin(), n.counts.end(), std::size_t{0}) >= 15);
    }
    CHECK(induce_tree(d, 2, 4, p).structural_hash() == t.structural_hash());

    // Consistent, noise-free labels with unbounded depth fit perfectly.
    std::vector<LabeledExample> clean;
    Rng r2(9);
    for (int i = 0; i < 300; ++i) {
        auto f = oracle::random_features(r2);
        clean.push_back(labeled(f, discretize_ratio(f.current_ratio)));
    }
    TreeParams deep{64, 1, 0.0};
    const auto full = induce_tree(clean, 1, 4, deep);
    for (const auto& ex : clean) CHECK(full.predict(ex.features) == ex.targets[0]);
}

TEST_CASE("laplace smoothing of leaves") {
    std::vector<LabeledExample> d;
    for (int i = 0; i < 2; ++i) d.push_back(labeled(at_hour(5), OccupancyClass::High));
    for (int i = 0; i < 8; ++i) d.push_back(labeled(at_hour(5), OccupancyClass::VeryHigh));
    const auto t = induce_tree(d, 1, 4);
    REQUIRE(t.nodes.size() == 1);
    const auto rb = extract_rules(t);
    REQUIRE(rb.rules.size() == 1);
    const std::array<double, 5> want{1.0 / 15, 1.0 / 15, 1.0 / 15, 3.0 / 15, 9.0 / 15};
    for (std::size_t k = 0; k < 5; ++k) CHECK(rb.rules[0].distribution[k] == doctest::Approx(want[k]).epsilon(1e-12));
    CHECK(rb.rules[0].consequent() == OccupancyClass::VeryHigh);
    CHECK(rb.rules[0].support == 10);
    // single-leaf base: same answer everywhere
    Rng rng(2);
    for (int i = 0; i < 10; ++i) CHECK(rule_infer(rb, oracle::random_features(rng)).distribution == rb.rules[0].distribution);
}

TEST_CASE("extracted rules agree with tree traversal and are exclusive") {
    for (std::uint64_t seed = 11; seed <= 13; ++seed) {
        Rng rng(seed);
        const auto d = oracle::random_examples(800, rng);
        const auto t = induce_tree(d, 1, 4, TreeParams{6, 10, 1e-4});
        const auto rb = extract_rules(t);
        CHECK(rb.exclusive);
        for (int i = 0; i < 1000; ++i) {
            const auto f = oracle::random_features(rng);
            std::size_t matches = 0;
            for (const auto& r : rb.rules) matches += r.matches(f);
            CHECK(matches == 1);
            CHECK(rule_infer(rb, f).distribution.argmax() == t.predict(f));
        }
    }
}

TEST_CASE("rule_infer integrity errors") {
    RuleBase rb;
    rb.rules.push_back({"a", {Condition::le("hour", 10)}, ClassDistribution::uniform(), 1});
    CHECK_THROWS_AS(rule_infer(rb, at_hour(12)), Error);
    rb.rules.push_back({"b", {Condition::le("hour", 20)}, ClassDistribution::uniform(), 1});
    CHECK_THROWS_AS(rule_infer(rb, at_hour(5)), Error);
    rb.exclusive = false;
    CHECK(rule_infer(rb, at_hour(5)).rule->id == "a");
}

TEST_CASE("planted lunch rule") {
    RuleBase rb;
    rb.exclusive = false;
    rb.rules.push_back({"lunch",
                        {Condition::in("day_of_week", {0, 1, 2, 3, 4}), Condition::gt("hour", 11.5), Condition::le("hour", 13.5),
                         Condition::eq("prev_occ", index_of(OccupancyClass::High))},
                        normalized({0.01, 0.01, 0.03, 0.1, 0.85}),
                        1});
    rb.rules.push_back({"else", {}, ClassDistribution::uniform(), 1});
    auto f = at_hour(12);
    f.current_ratio = 0.7;
    CHECK(rule_infer(rb, f).distribution.argmax() == OccupancyClass::VeryHigh);
    f.day_of_week = 6;
    CHECK(rule_infer(rb, f).rule->id == "else");
}

TEST_CASE("plausible classes") {
    const ClassDistribution d{{0.50, 0.30, 0.15, 0.04, 0.01}};
    CHECK(plausible_classes(d, 0.05) ==
          std::vector<OccupancyClass>{OccupancyClass::VeryLow, OccupancyClass::Low, OccupancyClass::Moderate});
    CHECK(plausible_classes(d, 0.0).size() == 5);
    const ClassDistribution peaked{{0.025, 0.025, 0.9, 0.025, 0.025}};
    CHECK(plausible_classes(peaked, 0.95) == std::vector<OccupancyClass>{OccupancyClass::Moderate});
}

TEST_CASE("rule file round trip and validation") {
    Rng rng(3);
    const auto d = oracle::random_examples(500, rng);
    const auto rb = extract_rules(induce_tree(d, 3, 4, TreeParams{5, 10, 1e-4}));
    CHECK(parse_rules(serialize_rules(rb)) == rb);

    const auto hand = parse_rules(kRainRule);
    CHECK_FALSE(hand.exclusive);
    auto f = at_hour(9);
    f.rainfall_mm = 3.2;
    f.current_ratio = 0.95;
    CHECK(rule_infer(hand, f).rule->id == "rain_high");
    f.rainfall_mm = 0.4;
    CHECK(rule_infer(hand, f).rule->id == "default");

    std::string bad = kRainRule;
    bad.replace(bad.find("0.6, 0.2"), 8, "0.6, 0.1");
    CHECK_THROWS_AS(parse_rules(bad), Error);
    try {
        parse_rules(bad);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("$.rules[0].distribution") != std::string::npos);
        CHECK(e.kind() == ErrorKind::Data);
    }
    CHECK_THROWS_AS(parse_rules(R"({"window": 1, "rules": [{"conditions": [{"feature": "nope", "op": "le", "value": 1}],
                                   "distribution": [0.2,0.2,0.2,0.2,0.2]}]})"),
                    Error);
    CHECK_THROWS_AS(parse_rules(R"({"window": 1, "lag_depth": "four", "rules": []})"), Error);
    CHECK_THROWS_AS(parse_rules("{not json"), Error);
}
