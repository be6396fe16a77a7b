#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nesy/core.hpp"
#include "nesy/data.hpp"
#include "nesy/random.hpp"

namespace nesy {

/// Mean-field Gaussian layer: weight ~ N(mean, softplus(rho)^2), prior N(0, prior_sigma^2).
struct VariationalLayer {
    Eigen::MatrixXd weight_mean;  // out x in
    Eigen::MatrixXd weight_rho;
    Eigen::VectorXd bias_mean;
    Eigen::VectorXd bias_rho;
    double prior_sigma = 1.0;

    Eigen::Index in() const noexcept { return weight_mean.cols(); }
    Eigen::Index out() const noexcept { return weight_mean.rows(); }
};

/// Rectifier hidden layers, linear output layer of width 5 followed by softmax.
struct BnnModel {
    std::vector<VariationalLayer> layers;
    FeatureSchema schema;

    std::size_t input_width() const noexcept {
        return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().in());
    }
    /// Throws a dimension error if the layer chain is broken or the output is not 5 wide.
    void validate() const;
};

double softplus(double x) noexcept;
double inverse_softplus(double y);

struct ModelShape {
    std::vector<int> hidden{64, 64};
    double prior_sigma = 1.0;
    double init_sigma = 0.05;
};

/// Means ~ N(0, 1/fan_in); rho chosen so every initial stddev equals `init_sigma`.
BnnModel make_model(const FeatureSchema& schema, const ModelShape& shape, std::uint64_t seed);

struct EncodeStats {
    std::size_t unseen_categorical = 0;
};

/// Normalized continuous block then one-hot day_of_week, month, weather_type.
Eigen::VectorXd encode_features(const FeatureVector& fv, const FeatureSchema& schema, EncodeStats* stats = nullptr);
/// One encoded example per row.
Eigen::MatrixXd encode_examples(std::span<const LabeledExample> examples, const FeatureSchema& schema,
                                EncodeStats* stats = nullptr);
std::vector<int> window_labels(std::span<const LabeledExample> examples, int window);

struct RealizedWeights {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// mean + softplus(rho) * eps per entry; `noise`, if given, receives the eps draws.
RealizedWeights sample_weights(const BnnModel& model, Rng& rng, RealizedWeights* noise = nullptr);
RealizedWeights mean_weights(const BnnModel& model);

Eigen::VectorXd forward(const BnnModel& model, const RealizedWeights& w, const Eigen::VectorXd& x);
/// Logits for each row of `x`.
Eigen::MatrixXd forward_batch(const BnnModel& model, const RealizedWeights& w, const Eigen::MatrixXd& x);

ClassDistribution softmax(const Eigen::VectorXd& logits);

/// Closed-form sum over all weights and biases of KL(N(mu, sigma^2) || N(0, prior_sigma^2)).
double kl_mean_field(const BnnModel& model);

struct LayerGradients {
    Eigen::MatrixXd weight_mean;
    Eigen::MatrixXd weight_rho;
    Eigen::VectorXd bias_mean;
    Eigen::VectorXd bias_rho;
};

struct ElboResult {
    double loss = 0.0;      // mean cross-entropy + kl / (total_batches * batch size)
    double mean_nll = 0.0;  // MC-averaged mean cross-entropy
    double kl = 0.0;
    std::vector<LayerGradients> grads;
};

/// Negative ELBO for one minibatch and its exact gradient through the reparameterized samples.
ElboResult elbo_minus(const BnnModel& model, const Eigen::MatrixXd& x, std::span<const int> labels,
                      int mc_samples, std::size_t total_batches, Rng& rng);

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    int mc_train_samples = 1;
    int mc_predict_samples = 50;
    int mc_val_samples = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool stopped_early = false;

    bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
    BnnModel model;
    std::vector<EpochLog> log;
};

/// Adam on minibatches with early stopping on the validation loss; the best epoch's
/// parameters are restored. Both datasets are encoded with the model's schema.
TrainResult train(BnnModel model, std::span<const LabeledExample> train_set,
                  std::span<const LabeledExample> validation_set, int window, const TrainConfig& config);

/// (1/S) sum_s softmax(forward(theta_s)), theta_s drawn from stream `s` of `seed`.
ClassDistribution posterior_predictive(const BnnModel& model, const Eigen::VectorXd& x, int samples, std::uint64_t seed);
/// Row-wise posterior predictive; identical to calling the single-input form per row.
std::vector<ClassDistribution> posterior_predictive_batch(const BnnModel& model, const Eigen::MatrixXd& x, int samples,
                                                          std::uint64_t seed);

/// Argmax class when its probability strictly exceeds `threshold`, otherwise abstain.
std::optional<OccupancyClass> confident_prediction(const ClassDistribution& dist, double threshold = 0.30);

std::string serialize_checkpoint(const BnnModel& model, const TrainConfig& config, int window);
struct Checkpoint {
    BnnModel model;
    TrainConfig config;
    int window = 1;
};
Checkpoint parse_checkpoint(std::string_view json_text);

void write_training_log(std::ostream& out, std::span<const EpochLog> log);

}  // namespace nesy
