#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nesy/core.hpp"
#include "nesy/data.hpp"

namespace nesy {

enum class FeatureKind { Continuous, Categorical, Boolean };

/// A feature the rule engine can test. `prev_occ` is the occupancy class of the current slot.
struct FeatureInfo {
    std::string name;
    FeatureKind kind = FeatureKind::Continuous;
    int domain_min = 0;  // categorical code range, inclusive
    int domain_max = 0;
};

/// Rule-engine feature catalogue in schema order: continuous block first, then
/// day_of_week, month, weather_type, prev_occ. `is_holiday` is boolean.
std::vector<FeatureInfo> rule_features(int lag_depth);
std::optional<FeatureInfo> find_rule_feature(std::string_view name, int lag_depth);
/// Numeric value of a feature; categorical codes and booleans are returned as whole numbers.
double rule_feature_value(const FeatureVector& fv, std::string_view name);

enum class ConditionOp { Le, Gt, In, Eq };
std::string_view op_name(ConditionOp op) noexcept;

struct Condition {
    std::string feature;
    ConditionOp op = ConditionOp::Le;
    double threshold = 0.0;   // Le, Gt
    std::vector<int> values;  // In (sorted, unique, nonempty)
    int value = 0;            // Eq

    bool matches(const FeatureVector& fv) const;
    bool operator==(const Condition&) const = default;

    static Condition le(std::string feature, double t) { return {std::move(feature), ConditionOp::Le, t, {}, 0}; }
    static Condition gt(std::string feature, double t) { return {std::move(feature), ConditionOp::Gt, t, {}, 0}; }
    static Condition in(std::string feature, std::vector<int> vs);
    static Condition eq(std::string feature, int v) { return {std::move(feature), ConditionOp::Eq, 0.0, {}, v}; }
};

struct Rule {
    std::string id;
    std::vector<Condition> conditions;
    ClassDistribution distribution;
    std::size_t support = 1;

    OccupancyClass consequent() const noexcept { return distribution.argmax(); }
    bool matches(const FeatureVector& fv) const;
    bool operator==(const Rule&) const = default;
};

struct RuleBase {
    int window = 1;  // 1-based prediction window (PW1..PW3)
    int lag_depth = 4;
    std::vector<Rule> rules;
    bool exclusive = true;  // exhaustive and pairwise disjoint

    bool operator==(const RuleBase&) const = default;
};

struct RuleMatch {
    ClassDistribution distribution;
    const Rule* rule = nullptr;
};

/// Distribution of the matching rule. Exclusive bases require exactly one match; otherwise the
/// first matching rule in order wins. No match is an integrity error.
RuleMatch rule_infer(const RuleBase& rb, const FeatureVector& fv);

/// Classes whose matched-rule probability is at least `tau_p`; falls back to {argmax} when empty.
std::vector<OccupancyClass> plausible_classes(const RuleBase& rb, const FeatureVector& fv, double tau_p = 0.05);
std::vector<OccupancyClass> plausible_classes(const ClassDistribution& dist, double tau_p = 0.05);

std::string serialize_rules(const RuleBase& rb);
/// Validates structure, feature names, op/value types and distributions; errors carry a JSON path.
RuleBase parse_rules(std::string_view json_text);

// ---------------------------------------------------------------------------
// Tree induction

using ClassCounts = std::array<std::size_t, kNumClasses>;

double gini_impurity(const ClassCounts& counts) noexcept;

struct TreeParams {
    int max_depth = 8;
    std::size_t min_leaf = 20;
    double min_gain = 1e-4;
};

struct TreeNode {
    std::optional<Condition> split;  // internal when set; `left` takes examples satisfying it
    int left = -1;
    int right = -1;
    ClassCounts counts{};
    int depth = 0;

    bool is_leaf() const noexcept { return !split.has_value(); }
    bool operator==(const TreeNode&) const = default;
};

/// Flat binary tree; node 0 is the root.
struct DecisionTree {
    std::vector<TreeNode> nodes;
    int lag_depth = 4;
    int window = 1;

    const TreeNode& leaf_for(const FeatureVector& fv) const;
    OccupancyClass predict(const FeatureVector& fv) const;
    std::string structural_hash() const;
    bool operator==(const DecisionTree&) const = default;
};

/// Greedy CART with Gini gain. Continuous thresholds are midpoints of sorted unique values,
/// categorical splits are value-vs-rest. Ties go to the earlier feature, then smaller threshold.
DecisionTree induce_tree(std::span<const LabeledExample> train, int window, int lag_depth, const TreeParams& params = {});
DecisionTree induce_tree(const Dataset& train, int window, const TreeParams& params = {});

/// One rule per leaf with Laplace-smoothed leaf frequencies (count+1)/(total+5).
RuleBase extract_rules(const DecisionTree& tree);

}  // namespace nesy
