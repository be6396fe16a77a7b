#include "nesy/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace nesy {

using json = nlohmann::json;

std::vector<FeatureInfo> rule_features(int lag_depth) {
    std::vector<FeatureInfo> out;
    for (auto& name : continuous_feature_names(lag_depth)) {
        const bool boolean = name == "is_holiday";
        out.push_back({name, boolean ? FeatureKind::Boolean : FeatureKind::Continuous, 0, boolean ? 1 : 0});
    }
    out.push_back({"day_of_week", FeatureKind::Categorical, 0, 6});
    out.push_back({"month", FeatureKind::Categorical, 1, 12});
    out.push_back({"weather_type", FeatureKind::Categorical, 0, kNumWeatherTypes - 1});
    out.push_back({"prev_occ", FeatureKind::Categorical, 0, static_cast<int>(kNumClasses) - 1});
    return out;
}

std::optional<FeatureInfo> find_rule_feature(std::string_view name, int lag_depth) {
    for (auto& f : rule_features(lag_depth)) {
        if (f.name == name) return f;
    }
    return std::nullopt;
}

double rule_feature_value(const FeatureVector& fv, std::string_view name) {
    if (name == "day_of_week") return fv.day_of_week;
    if (name == "month") return fv.month;
    if (name == "weather_type") return static_cast<int>(fv.weather_type);
    if (name == "prev_occ") return index_of(discretize_ratio(fv.current_ratio));
    return continuous_value(fv, name);
}

std::string_view op_name(ConditionOp op) noexcept {
    switch (op) {
        case ConditionOp::Le: return "le";
        case ConditionOp::Gt: return "gt";
        case ConditionOp::In: return "in";
        case ConditionOp::Eq: return "eq";
    }
    return "le";
}

Condition Condition::in(std::string feature, std::vector<int> vs) {
    std::sort(vs.begin(), vs.end());
    vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
    if (vs.empty()) throw integrity_error("condition '" + feature + " in {}' has an empty value set");
    return {std::move(feature), ConditionOp::In, 0.0, std::move(vs), 0};
}

bool Condition::matches(const FeatureVector& fv) const {
    const double v = rule_feature_value(fv, feature);
    switch (op) {
        case ConditionOp::Le: return v <= threshold;
        case ConditionOp::Gt: return v > threshold;
        case ConditionOp::In: return std::binary_search(values.begin(), values.end(), static_cast<int>(std::lround(v)));
        case ConditionOp::Eq: return static_cast<int>(std::lround(v)) == value;
    }
    return false;
}

bool Rule::matches(const FeatureVector& fv) const {
    return std::all_of(conditions.begin(), conditions.end(), [&](const Condition& c) { return c.matches(fv); });
}

RuleMatch rule_infer(const RuleBase& rb, const FeatureVector& fv) {
    const Rule* found = nullptr;
    for (const auto& r : rb.rules) {
        if (!r.matches(fv)) continue;
        if (!found) {
            found = &r;
            if (!rb.exclusive) break;
        } else {
            throw integrity_error(fmt::format("rules '{}' and '{}' both match in an exclusive rule base", found->id, r.id));
        }
    }
    if (!found) throw integrity_error("no rule matches the input");
    return {found->distribution, found};
}

std::vector<OccupancyClass> plausible_classes(const ClassDistribution& dist, double tau_p) {
    std::vector<OccupancyClass> out;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (dist[i] >= tau_p) out.push_back(static_cast<OccupancyClass>(i));
    }
    if (out.empty()) out.push_back(dist.argmax());
    return out;
}

std::vector<OccupancyClass> plausible_classes(const RuleBase& rb, const FeatureVector& fv, double tau_p) {
    return plausible_classes(rule_infer(rb, fv).distribution, tau_p);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json value_token(const FeatureInfo& f, int code) {
    if (f.name == "weather_type") return weather_name(static_cast<WeatherType>(code));
    if (f.name == "prev_occ") return class_name(class_from_index(code));
    if (f.kind == FeatureKind::Boolean) return code != 0;
    return code;
}

int code_from_token(const FeatureInfo& f, const json& v, const std::string& path) {
    int code = 0;
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (f.name == "weather_type") {
            code = static_cast<int>(weather_from_name(s));
        } else if (f.name == "prev_occ") {
            auto c = class_from_name(s);
            if (!c) throw data_error(fmt::format("{}: unknown class '{}'", path, s));
            code = index_of(*c);
        } else {
            throw data_error(fmt::format("{}: feature '{}' takes integer values", path, f.name));
        }
    } else if (v.is_boolean()) {
        code = v.get<bool>() ? 1 : 0;
    } else if (v.is_number_integer()) {
        code = v.get<int>();
    } else {
        throw data_error(fmt::format("{}: expected a categorical value", path));
    }
    if (code < f.domain_min || code > f.domain_max) {
        throw data_error(fmt::format("{}: value {} outside domain of '{}'", path, code, f.name));
    }
    return code;
}

}  // namespace

std::string serialize_rules(const RuleBase& rb) {
    json rules = json::array();
    for (const auto& r : rb.rules) {
        json conds = json::array();
        for (const auto& c : r.conditions) {
            auto info = find_rule_feature(c.feature, rb.lag_depth);
            if (!info) throw integrity_error("rule '" + r.id + "' references unknown feature '" + c.feature + "'");
            json value;
            switch (c.op) {
                case ConditionOp::Le:
                case ConditionOp::Gt: value = c.threshold; break;
                case ConditionOp::Eq: value = value_token(*info, c.value); break;
                case ConditionOp::In:
                    value = json::array();
                    for (int v : c.values) value.push_back(value_token(*info, v));
                    break;
            }
            conds.push_back({{"feature", c.feature}, {"op", op_name(c.op)}, {"value", value}});
        }
        rules.push_back({{"id", r.id},
                         {"conditions", conds},
                         {"consequent", class_name(r.consequent())},
                         {"distribution", r.distribution.probs},
                         {"support", r.support}});
    }
    return json{{"window", rb.window}, {"lag_depth", rb.lag_depth}, {"exclusive", rb.exclusive}, {"rules", rules}}
        .dump(1);
}

namespace {

RuleBase parse_rules_document(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw data_error(std::string("rule file: ") + e.what());
    }
    auto require = [](const json& j, const char* key, const std::string& path) -> const json& {
        if (!j.is_object() || !j.contains(key)) throw data_error(fmt::format("{}: missing '{}'", path, key));
        return j.at(key);
    };

    RuleBase rb;
    const auto& window = require(doc, "window", "$");
    if (!window.is_number_integer() || window.get<int>() < 1 || window.get<int>() > static_cast<int>(kNumWindows)) {
        throw data_error("$.window: expected 1, 2 or 3");
    }
    rb.window = window.get<int>();
    if (doc.contains("lag_depth")) rb.lag_depth = doc.at("lag_depth").get<int>();
    // Hand-authored files may overlap; only an explicit flag asks for the exclusivity check.
    rb.exclusive = doc.contains("exclusive") && doc.at("exclusive").get<bool>();

    const auto& rules = require(doc, "rules", "$");
    if (!rules.is_array()) throw data_error("$.rules: expected an array");
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const auto rpath = fmt::format("$.rules[{}]", i);
        const auto& jr = rules[i];
        Rule r;
        r.id = jr.contains("id") ? jr.at("id").get<std::string>() : fmt::format("r{}", i);

        const auto& conds = require(jr, "conditions", rpath);
        if (!conds.is_array()) throw data_error(rpath + ".conditions: expected an array");
        for (std::size_t k = 0; k < conds.size(); ++k) {
            const auto cpath = fmt::format("{}.conditions[{}]", rpath, k);
            const auto& jc = conds[k];
            const auto fname = require(jc, "feature", cpath).get<std::string>();
            auto info = find_rule_feature(fname, rb.lag_depth);
            if (!info) throw data_error(fmt::format("{}.feature: unknown feature '{}'", cpath, fname));
            const auto op = require(jc, "op", cpath).get<std::string>();
            const auto& value = require(jc, "value", cpath);
            const auto vpath = cpath + ".value";
            if (op == "le" || op == "gt") {
                if (!value.is_number()) throw data_error(vpath + ": expected a number");
                r.conditions.push_back(op == "le" ? Condition::le(fname, value.get<double>())
                                                  : Condition::gt(fname, value.get<double>()));
            } else if (op == "eq") {
                if (info->kind == FeatureKind::Continuous) throw data_error(vpath + ": 'eq' needs a categorical feature");
                r.conditions.push_back(Condition::eq(fname, code_from_token(*info, value, vpath)));
            } else if (op == "in") {
                if (info->kind == FeatureKind::Continuous) throw data_error(vpath + ": 'in' needs a categorical feature");
                if (!value.is_array() || value.empty()) throw data_error(vpath + ": expected a nonempty array");
                std::vector<int> codes;
                for (std::size_t m = 0; m < value.size(); ++m) {
                    codes.push_back(code_from_token(*info, value[m], fmt::format("{}[{}]", vpath, m)));
                }
                r.conditions.push_back(Condition::in(fname, std::move(codes)));
            } else {
                throw data_error(fmt::format("{}.op: unknown op '{}'", cpath, op));
            }
        }

        const auto dpath = rpath + ".distribution";
        const auto& dist = require(jr, "distribution", rpath);
        if (!dist.is_array() || dist.size() != kNumClasses) throw data_error(dpath + ": expected 5 probabilities");
        double total = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            if (!dist[c].is_number()) throw data_error(fmt::format("{}[{}]: expected a number", dpath, c));
            const double p = dist[c].get<double>();
            if (!(p >= 0.0 && p <= 1.0)) throw data_error(fmt::format("{}[{}]: probability outside [0,1]", dpath, c));
            r.distribution[c] = p;
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-6) throw data_error(fmt::format("{}: probabilities sum to {}", dpath, total));
        if (std::abs(total - 1.0) > 1e-12) {
            for (auto& p : r.distribution.probs) p /= total;
        }

        if (jr.contains("support")) {
            const auto& s = jr.at("support");
            if (!s.is_number_integer() || s.get<long long>() < 1) throw data_error(rpath + ".support: expected an integer >= 1");
            r.support = s.get<std::size_t>();
        }
        rb.rules.push_back(std::move(r));
    }
    return rb;
}

}  // namespace

RuleBase parse_rules(std::string_view json_text) {
    try {
        return parse_rules_document(json_text);
    } catch (const json::exception& e) {
        throw data_error(std::string("rule file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Tree induction

double gini_impurity(const ClassCounts& counts) noexcept {
    const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    if (n == 0.0) return 0.0;
    double s = 0.0;
    for (auto c : counts) {
        const double p = static_cast<double>(c) / n;
        s += p * p;
    }
    return 1.0 - s;
}

namespace {

struct Column {
    FeatureInfo info;
    std::vector<double> values;
};

struct SplitCandidate {
    double gain = -1.0;
    std::optional<Condition> left_test;
};

struct Builder {
    const std::vector<Column>& cols;
    const std::vector<int>& labels;
    TreeParams params;
    std::vector<TreeNode> nodes;

    ClassCounts count(std::span<const std::size_t> idx) const {
        ClassCounts c{};
        for (auto i : idx) ++c[static_cast<std::size_t>(labels[i])];
        return c;
    }

    static double weighted(const ClassCounts& l, const ClassCounts& r, double n) {
        const double nl = static_cast<double>(std::accumulate(l.begin(), l.end(), std::size_t{0}));
        const double nr = static_cast<double>(std::accumulate(r.begin(), r.end(), std::size_t{0}));
        return (nl / n) * gini_impurity(l) + (nr / n) * gini_impurity(r);
    }

    static void consider(SplitCandidate& best, double gain, Condition left) {
        if (gain > best.gain) {
            best.gain = gain;
            best.left_test = std::move(left);
        }
    }

    SplitCandidate best_split(std::span<const std::size_t> idx, const ClassCounts& parent) const {
        SplitCandidate best;
        const double n = static_cast<double>(idx.size());
        const double g0 = gini_impurity(parent);
        const std::size_t min_leaf = std::max<std::size_t>(params.min_leaf, 1);
        std::vector<std::size_t> order(idx.begin(), idx.end());

        for (const auto& col : cols) {
            const auto& v = col.values;
            if (col.info.kind == FeatureKind::Continuous) {
                std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
                ClassCounts left{};
                ClassCounts right = parent;
                for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                    const auto lab = static_cast<std::size_t>(labels[order[k]]);
                    ++left[lab];
                    --right[lab];
                    const double a = v[order[k]];
                    const double b = v[order[k + 1]];
                    if (!(a < b)) continue;
                    if (k + 1 < min_leaf || order.size() - (k + 1) < min_leaf) continue;
                    double thr = a + (b - a) / 2.0;
                    if (!(thr < b)) thr = a;
                    consider(best, g0 - weighted(left, right, n), Condition::le(col.info.name, thr));
                }
            } else {
                const int lo = col.info.domain_min;
                const int hi = col.info.domain_max;
                std::vector<ClassCounts> by_value(static_cast<std::size_t>(hi - lo + 1));
                for (auto i : idx) ++by_value[static_cast<std::size_t>(std::lround(v[i]) - lo)][static_cast<std::size_t>(labels[i])];
                for (int val = lo; val <= hi; ++val) {
                    const auto& left = by_value[static_cast<std::size_t>(val - lo)];
                    const std::size_t nl = std::accumulate(left.begin(), left.end(), std::size_t{0});
                    if (nl < min_leaf || idx.size() - nl < min_leaf) continue;
                    ClassCounts right{};
                    for (std::size_t c = 0; c < kNumClasses; ++c) right[c] = parent[c] - left[c];
                    const double gain = g0 - weighted(left, right, n);
                    if (col.info.kind == FeatureKind::Boolean) {
                        consider(best, gain, Condition::eq(col.info.name, val));
                        break;  // the complementary split is identical
                    }
                    consider(best, gain, Condition::in(col.info.name, {val}));
                }
            }
        }
        return best;
    }

    int build(std::vector<std::size_t> idx, int depth) {
        const int id = static_cast<int>(nodes.size());
        nodes.push_back({});
        nodes[id].counts = count(idx);
        nodes[id].depth = depth;
        const auto& counts = nodes[id].counts;
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (pure || depth >= params.max_depth || idx.size() < 2 * std::max<std::size_t>(params.min_leaf, 1)) return id;

        auto best = best_split(idx, counts);
        if (!best.left_test || best.gain < params.min_gain) return id;

        std::vector<std::size_t> li, ri;
        const auto& col = *std::find_if(cols.begin(), cols.end(), [&](const Column& c) { return c.info.name == best.left_test->feature; });
        for (auto i : idx) {
            if (test_value(*best.left_test, col.values[i])) {
                li.push_back(i);
            } else {
                ri.push_back(i);
            }
        }
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(std::move(li), depth + 1);
        const int r = build(std::move(ri), depth + 1);
        nodes[id].split = std::move(best.left_test);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }

    static bool test_value(const Condition& c, double v) {
        switch (c.op) {
            case ConditionOp::Le: return v <= c.threshold;
            case ConditionOp::Gt: return v > c.threshold;
            case ConditionOp::In: return std::binary_search(c.values.begin(), c.values.end(), static_cast<int>(std::lround(v)));
            case ConditionOp::Eq: return static_cast<int>(std::lround(v)) == c.value;
        }
        return false;
    }
};

Condition negate_split(const Condition& c, const FeatureInfo& info) {
    switch (c.op) {
        case ConditionOp::Le: return Condition::gt(c.feature, c.threshold);
        case ConditionOp::Gt: return Condition::le(c.feature, c.threshold);
        case ConditionOp::Eq: return Condition::eq(c.feature, 1 - c.value);
        case ConditionOp::In: {
            std::vector<int> rest;
            for (int v = info.domain_min; v <= info.domain_max; ++v) {
                if (!std::binary_search(c.values.begin(), c.values.end(), v)) rest.push_back(v);
            }
            return Condition::in(c.feature, rest);
        }
    }
    return c;
}

}  // namespace

DecisionTree induce_tree(std::span<const LabeledExample> train, int window, int lag_depth, const TreeParams& params) {
    if (train.empty()) throw data_error("cannot induce a tree from an empty training set");
    if (window < 1 || window > static_cast<int>(kNumWindows)) throw config_error("window must be 1, 2 or 3");

    std::vector<Column> cols;
    for (auto& info : rule_features(lag_depth)) {
        Column c{info, {}};
        c.values.reserve(train.size());
        for (const auto& e : train) c.values.push_back(rule_feature_value(e.features, info.name));
        cols.push_back(std::move(c));
    }
    std::vector<int> labels;
    labels.reserve(train.size());
    for (const auto& e : train) labels.push_back(index_of(e.targets[static_cast<std::size_t>(window - 1)]));

    Builder b{cols, labels, params, {}};
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    b.build(std::move(all), 0);
    return DecisionTree{std::move(b.nodes), lag_depth, window};
}

DecisionTree induce_tree(const Dataset& train, int window, const TreeParams& params) {
    return induce_tree(train.examples, window, train.schema.lag_depth, params);
}

const TreeNode& DecisionTree::leaf_for(const FeatureVector& fv) const {
    if (nodes.empty()) throw integrity_error("empty decision tree");
    const TreeNode* n = &nodes.front();
    while (!n->is_leaf()) n = &nodes.at(static_cast<std::size_t>(n->split->matches(fv) ? n->left : n->right));
    return *n;
}

OccupancyClass DecisionTree::predict(const FeatureVector& fv) const {
    const auto& c = leaf_for(fv).counts;
    return static_cast<OccupancyClass>(std::max_element(c.begin(), c.end()) - c.begin());
}

std::string DecisionTree::structural_hash() const {
    json j = json::array();
    for (const auto& n : nodes) {
        json split = nullptr;
        if (n.split) split = {n.split->feature, op_name(n.split->op), n.split->threshold, n.split->values, n.split->value};
        j.push_back({split, n.left, n.right, n.counts});
    }
    return fnv1a64_hex(j.dump());
}

RuleBase extract_rules(const DecisionTree& tree) {
    if (tree.nodes.empty()) throw integrity_error("empty decision tree");
    RuleBase rb;
    rb.window = tree.window;
    rb.lag_depth = tree.lag_depth;
    rb.exclusive = true;

    std::vector<Condition> path;
    auto visit = [&](auto&& self, int id) -> void {
        const auto& n = tree.nodes.at(static_cast<std::size_t>(id));
        if (n.is_leaf()) {
            Rule r;
            r.id = fmt::format("r{}", rb.rules.size());
            r.conditions = path;
            const double total = static_cast<double>(std::accumulate(n.counts.begin(), n.counts.end(), std::size_t{0}));
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                r.distribution[c] = (static_cast<double>(n.counts[c]) + 1.0) / (total + static_cast<double>(kNumClasses));
            }
            r.support = std::max<std::size_t>(static_cast<std::size_t>(total), 1);
            rb.rules.push_back(std::move(r));
            return;
        }
        const auto info = find_rule_feature(n.split->feature, tree.lag_depth);
        if (!info) throw integrity_error("tree split on unknown feature '" + n.split->feature + "'");
        path.push_back(*n.split);
        self(self, n.left);
        path.back() = negate_split(*n.split, *info);
        self(self, n.right);
        path.pop_back();
    };
    visit(visit, 0);
    return rb;
}

}  // namespace nesy
