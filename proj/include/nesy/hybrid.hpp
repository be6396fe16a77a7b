#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nesy/bnn.hpp"
#include "nesy/core.hpp"
#include "nesy/symbolic.hpp"

namespace nesy {

enum class DecisionSource { Neural, NeuralRefined, Symbolic };
std::string_view source_name(DecisionSource s) noexcept;

struct PredictionOutcome {
    OccupancyClass predicted = OccupancyClass::VeryLow;
    DecisionSource source = DecisionSource::Neural;
    ClassDistribution neural_distribution;
    std::optional<ClassDistribution> refined_distribution;
    std::optional<std::vector<OccupancyClass>> plausible_set;
    std::optional<std::string> matched_rule;
    double confidence = 0.0;  // max probability of the distribution that decided
};

/// Source-specific invariants: neural => confidence > threshold; neural_refined => refined
/// confidence > threshold with a plausible set; symbolic => a matched rule.
bool provenance_sound(const PredictionOutcome& o, double threshold);

/// Zeroes classes outside `plausible` and renormalizes; uniform over the set if it carries no mass.
ClassDistribution refine_distribution(const ClassDistribution& dist, std::span<const OccupancyClass> plausible);

enum class RefinementMode {
    Renormalize,         // rescale the existing posterior predictive over the plausible set
    RestrictedResample,  // fresh MC average of softmax restricted to the plausible logits
};

/// Dispatch rules given an already computed neural distribution and the matching rule.
PredictionOutcome decide_method1(const ClassDistribution& neural, const RuleMatch& match, double threshold);

using RestrictedPredictive = std::function<ClassDistribution(std::span<const OccupancyClass>)>;
PredictionOutcome decide_method2(const ClassDistribution& neural, const RuleMatch& match, double threshold,
                                 double tau_p, const RestrictedPredictive& restricted = {});

PredictionOutcome decide_symbolic(const ClassDistribution& neural, const RuleMatch& match);

struct HybridConfig {
    double threshold = 0.30;
    double tau_p = 0.05;
    int mc_samples = 50;
    std::uint64_t seed = 0;
    RefinementMode refinement = RefinementMode::Renormalize;
};

/// Both components must be trained for the same window and share a schema.
class HybridPredictor {
public:
    HybridPredictor(const BnnModel& model, const RuleBase& rules, HybridConfig config);

    ClassDistribution neural(const FeatureVector& fv) const;
    PredictionOutcome method1(const FeatureVector& fv) const;
    PredictionOutcome method2(const FeatureVector& fv) const;
    PredictionOutcome symbolic(const FeatureVector& fv) const;

    /// Posterior predictive for many inputs in one pass (same draws as `neural`).
    std::vector<ClassDistribution> neural_batch(std::span<const LabeledExample> examples) const;
    PredictionOutcome method2_given(const ClassDistribution& neural, const FeatureVector& fv) const;

    const HybridConfig& config() const noexcept { return config_; }

private:
    const BnnModel& model_;
    const RuleBase& rules_;
    HybridConfig config_;
};

PredictionOutcome predict_method1(const BnnModel& model, const RuleBase& rules, const FeatureVector& fv,
                                  double threshold = 0.30, int mc_samples = 50, std::uint64_t seed = 0);
PredictionOutcome predict_method2(const BnnModel& model, const RuleBase& rules, const FeatureVector& fv,
                                  double threshold = 0.30, double tau_p = 0.05, int mc_samples = 50,
                                  std::uint64_t seed = 0);

/// Naive persistence: the current slot's class.
OccupancyClass predict_persistence(const FeatureVector& fv);

/// (1/S) sum_s softmax over `allowed` classes only, drawing the same weights as posterior_predictive.
ClassDistribution restricted_posterior_predictive(const BnnModel& model, const Eigen::VectorXd& x, int samples,
                                                  std::uint64_t seed, std::span<const OccupancyClass> allowed);

}  // namespace nesy
