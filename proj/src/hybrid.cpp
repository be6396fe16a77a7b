#include "nesy/hybrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nesy {

std::string_view source_name(DecisionSource s) noexcept {
    switch (s) {
        case DecisionSource::Neural: return "neural";
        case DecisionSource::NeuralRefined: return "neural_refined";
        case DecisionSource::Symbolic: return "symbolic";
    }
    return "neural";
}

bool provenance_sound(const PredictionOutcome& o, double threshold) {
    switch (o.source) {
        case DecisionSource::Neural:
            return o.confidence > threshold && o.predicted == o.neural_distribution.argmax();
        case DecisionSource::NeuralRefined:
            return o.refined_distribution && o.plausible_set && o.confidence > threshold &&
                   o.predicted == o.refined_distribution->argmax();
        case DecisionSource::Symbolic: return o.matched_rule.has_value();
    }
    return false;
}

ClassDistribution refine_distribution(const ClassDistribution& dist, std::span<const OccupancyClass> plausible) {
    if (plausible.empty()) throw domain_error("refinement needs a nonempty plausible set");
    std::array<bool, kNumClasses> keep{};
    for (auto c : plausible) keep[static_cast<std::size_t>(index_of(c))] = true;

    double mass = 0.0;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (keep[i]) mass += dist[i];
    }
    const auto kept = static_cast<double>(std::count(keep.begin(), keep.end(), true));
    ClassDistribution out;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (!keep[i]) continue;
        out[i] = mass > 0.0 ? dist[i] / mass : 1.0 / kept;
    }
    return out;
}

PredictionOutcome decide_symbolic(const ClassDistribution& neural, const RuleMatch& match) {
    PredictionOutcome o;
    o.source = DecisionSource::Symbolic;
    o.neural_distribution = neural;
    o.predicted = match.distribution.argmax();
    o.confidence = match.distribution.max();
    if (match.rule) o.matched_rule = match.rule->id;
    return o;
}

PredictionOutcome decide_method1(const ClassDistribution& neural, const RuleMatch& match, double threshold) {
    if (auto c = confident_prediction(neural, threshold)) {
        PredictionOutcome o;
        o.predicted = *c;
        o.source = DecisionSource::Neural;
        o.neural_distribution = neural;
        o.confidence = neural.max();
        return o;
    }
    return decide_symbolic(neural, match);
}

PredictionOutcome decide_method2(const ClassDistribution& neural, const RuleMatch& match, double threshold,
                                 double tau_p, const RestrictedPredictive& restricted) {
    if (confident_prediction(neural, threshold)) return decide_method1(neural, match, threshold);

    auto plausible = plausible_classes(match.distribution, tau_p);
    const ClassDistribution refined = restricted ? restricted(plausible) : refine_distribution(neural, plausible);
    if (auto c = confident_prediction(refined, threshold)) {
        PredictionOutcome o;
        o.predicted = *c;
        o.source = DecisionSource::NeuralRefined;
        o.neural_distribution = neural;
        o.refined_distribution = refined;
        o.plausible_set = std::move(plausible);
        o.confidence = refined.max();
        return o;
    }
    auto o = decide_symbolic(neural, match);
    o.refined_distribution = refined;
    o.plausible_set = std::move(plausible);
    return o;
}

HybridPredictor::HybridPredictor(const BnnModel& model, const RuleBase& rules, HybridConfig config)
    : model_(model), rules_(rules), config_(config) {
    if (!(config_.threshold >= 0.0 && config_.threshold <= 1.0)) throw config_error("threshold must lie in [0,1]");
    if (!(config_.tau_p >= 0.0 && config_.tau_p < 1.0)) throw config_error("tau_p must lie in [0,1)");
    if (model_.schema.lag_depth != rules_.lag_depth) {
        throw integrity_error("model and rule base were built for different lag depths");
    }
}

ClassDistribution HybridPredictor::neural(const FeatureVector& fv) const {
    return posterior_predictive(model_, encode_features(fv, model_.schema), config_.mc_samples, config_.seed);
}

std::vector<ClassDistribution> HybridPredictor::neural_batch(std::span<const LabeledExample> examples) const {
    if (examples.empty()) return {};
    return posterior_predictive_batch(model_, encode_examples(examples, model_.schema), config_.mc_samples,
                                      config_.seed);
}

PredictionOutcome HybridPredictor::method1(const FeatureVector& fv) const {
    return decide_method1(neural(fv), rule_infer(rules_, fv), config_.threshold);
}

PredictionOutcome HybridPredictor::method2_given(const ClassDistribution& neural_dist, const FeatureVector& fv) const {
    RestrictedPredictive restricted;
    if (config_.refinement == RefinementMode::RestrictedResample) {
        restricted = [&](std::span<const OccupancyClass> allowed) {
            return restricted_posterior_predictive(model_, encode_features(fv, model_.schema), config_.mc_samples,
                                                   config_.seed, allowed);
        };
    }
    return decide_method2(neural_dist, rule_infer(rules_, fv), config_.threshold, config_.tau_p, restricted);
}

PredictionOutcome HybridPredictor::method2(const FeatureVector& fv) const { return method2_given(neural(fv), fv); }

PredictionOutcome HybridPredictor::symbolic(const FeatureVector& fv) const {
    return decide_symbolic(neural(fv), rule_infer(rules_, fv));
}

PredictionOutcome predict_method1(const BnnModel& model, const RuleBase& rules, const FeatureVector& fv,
                                  double threshold, int mc_samples, std::uint64_t seed) {
    return HybridPredictor(model, rules, {threshold, 0.05, mc_samples, seed, RefinementMode::Renormalize}).method1(fv);
}

PredictionOutcome predict_method2(const BnnModel& model, const RuleBase& rules, const FeatureVector& fv,
                                  double threshold, double tau_p, int mc_samples, std::uint64_t seed) {
    return HybridPredictor(model, rules, {threshold, tau_p, mc_samples, seed, RefinementMode::Renormalize}).method2(fv);
}

OccupancyClass predict_persistence(const FeatureVector& fv) { return discretize_ratio(fv.current_ratio); }

ClassDistribution restricted_posterior_predictive(const BnnModel& model, const Eigen::VectorXd& x, int samples,
                                                  std::uint64_t seed, std::span<const OccupancyClass> allowed) {
    if (allowed.empty()) throw domain_error("restricted predictive needs a nonempty class set");
    if (samples < 1) throw config_error("posterior predictive needs at least one sample");
    std::array<bool, kNumClasses> keep{};
    for (auto c : allowed) keep[static_cast<std::size_t>(index_of(c))] = true;

    std::array<double, kNumClasses> acc{};
    for (int s = 0; s < samples; ++s) {
        Rng rng = derived_stream(seed, static_cast<std::uint64_t>(s));
        const Eigen::VectorXd z = forward(model, sample_weights(model, rng), x);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < kNumClasses; ++i) {
            if (keep[i]) m = std::max(m, z(static_cast<Eigen::Index>(i)));
        }
        std::array<double, kNumClasses> e{};
        double total = 0.0;
        for (std::size_t i = 0; i < kNumClasses; ++i) {
            if (keep[i]) total += e[i] = std::exp(z(static_cast<Eigen::Index>(i)) - m);
        }
        for (std::size_t i = 0; i < kNumClasses; ++i) acc[i] += e[i] / total;
    }
    return normalized(acc);
}

}  // namespace nesy
