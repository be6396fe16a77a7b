#include "nesy/bnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "json_codec.hpp"

namespace nesy {

namespace {

double sigmoid(double x) noexcept {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Eigen::MatrixXd softplus_of(const Eigen::MatrixXd& rho) {
    return rho.unaryExpr([](double r) { return softplus(r); });
}

Eigen::MatrixXd sigmoid_of(const Eigen::MatrixXd& rho) {
    return rho.unaryExpr([](double r) { return sigmoid(r); });
}

template <class Derived>
void fill_normal(Eigen::DenseBase<Derived>& m, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n01(rng);
    }
}

// Row-wise log-sum-exp for numerically stable softmax and cross-entropy.
Eigen::VectorXd row_logsumexp(const Eigen::MatrixXd& z) {
    Eigen::VectorXd out(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        out(i) = m + std::log((z.row(i).array() - m).exp().sum());
    }
    return out;
}

double kl_term_sum(const Eigen::ArrayXXd& mu, const Eigen::ArrayXXd& sigma, double prior_sigma) {
    const double ps2 = prior_sigma * prior_sigma;
    return ((prior_sigma / sigma).log() + (sigma.square() + mu.square()) / (2.0 * ps2) - 0.5).sum();
}

}  // namespace

double softplus(double x) noexcept {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
    if (!(y > 0.0)) throw domain_error("inverse_softplus needs a positive argument");
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

void BnnModel::validate() const {
    if (layers.empty()) throw dimension_error("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (L.weight_rho.rows() != L.out() || L.weight_rho.cols() != L.in() || L.bias_mean.size() != L.out() ||
            L.bias_rho.size() != L.out()) {
            throw dimension_error(fmt::format("layer {} has inconsistent parameter shapes", l));
        }
        if (!(L.prior_sigma > 0.0)) throw domain_error(fmt::format("layer {} prior_sigma must be positive", l));
        if (l > 0 && L.in() != layers[l - 1].out()) {
            throw dimension_error(fmt::format("layer {} expects width {} but previous layer emits {}", l, L.in(),
                                              layers[l - 1].out()));
        }
    }
    if (layers.back().out() != static_cast<Eigen::Index>(kNumClasses)) {
        throw dimension_error("output layer must have 5 units");
    }
}

BnnModel make_model(const FeatureSchema& schema, const ModelShape& shape, std::uint64_t seed) {
    if (!(shape.prior_sigma > 0.0) || !(shape.init_sigma > 0.0)) throw config_error("sigma values must be positive");
    BnnModel m;
    m.schema = schema;
    Rng rng{mix64(seed)};
    std::vector<int> widths{static_cast<int>(schema.width())};
    for (int h : shape.hidden) {
        if (h < 1) throw config_error("hidden layer widths must be >= 1");
        widths.push_back(h);
    }
    widths.push_back(static_cast<int>(kNumClasses));
    const double rho0 = inverse_softplus(shape.init_sigma);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        VariationalLayer L;
        L.prior_sigma = shape.prior_sigma;
        L.weight_mean.resize(widths[l + 1], widths[l]);
        fill_normal(L.weight_mean, rng);
        L.weight_mean *= 1.0 / std::sqrt(static_cast<double>(widths[l]));
        L.weight_rho = Eigen::MatrixXd::Constant(widths[l + 1], widths[l], rho0);
        L.bias_mean = Eigen::VectorXd::Zero(widths[l + 1]);
        L.bias_rho = Eigen::VectorXd::Constant(widths[l + 1], rho0);
        m.layers.push_back(std::move(L));
    }
    return m;
}

Eigen::VectorXd encode_features(const FeatureVector& fv, const FeatureSchema& schema, EncodeStats* stats) {
    if (static_cast<int>(fv.past_ratios.size()) != schema.lag_depth) {
        throw dimension_error(fmt::format("feature vector has {} past ratios, schema expects {}", fv.past_ratios.size(),
                                          schema.lag_depth));
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(schema.width()));
    Eigen::Index k = 0;
    for (const auto& r : schema.continuous) {
        const double v = continuous_value(fv, r.name);
        x(k++) = r.max > r.min ? (v - r.min) / (r.max - r.min) : 0.0;
    }
    // Out-of-range codes are counted; weather falls back to its "other" slot, the calendar blocks stay zero.
    auto one_hot = [&](int value, int lo, int width, int fallback) {
        int pos = value - lo;
        if (pos < 0 || pos >= width) {
            if (stats) ++stats->unseen_categorical;
            pos = fallback;
        }
        if (pos >= 0 && pos < width) x(k + pos) = 1.0;
        k += width;
    };
    one_hot(fv.day_of_week, 0, schema.day_of_week_width, -1);
    one_hot(fv.month, 1, schema.month_width, -1);
    one_hot(static_cast<int>(fv.weather_type), 0, schema.weather_width, static_cast<int>(WeatherType::Other));
    return x;
}

Eigen::MatrixXd encode_examples(std::span<const LabeledExample> examples, const FeatureSchema& schema,
                                EncodeStats* stats) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(schema.width()));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = encode_features(examples[i].features, schema, stats).transpose();
    }
    return x;
}

std::vector<int> window_labels(std::span<const LabeledExample> examples, int window) {
    if (window < 1 || window > static_cast<int>(kNumWindows)) throw config_error("window must be 1, 2 or 3");
    std::vector<int> y;
    y.reserve(examples.size());
    for (const auto& e : examples) y.push_back(index_of(e.targets[static_cast<std::size_t>(window - 1)]));
    return y;
}

RealizedWeights sample_weights(const BnnModel& model, Rng& rng, RealizedWeights* noise) {
    RealizedWeights w;
    if (noise) *noise = {};
    for (const auto& L : model.layers) {
        Eigen::MatrixXd ew(L.out(), L.in());
        Eigen::VectorXd eb(L.out());
        fill_normal(ew, rng);
        fill_normal(eb, rng);
        const Eigen::MatrixXd sw = softplus_of(L.weight_rho);
        const Eigen::VectorXd sb = softplus_of(L.bias_rho);
        w.weights.push_back(L.weight_mean + sw.cwiseProduct(ew));
        w.biases.push_back(L.bias_mean + sb.cwiseProduct(eb));
        if (noise) {
            noise->weights.push_back(std::move(ew));
            noise->biases.push_back(std::move(eb));
        }
    }
    return w;
}

RealizedWeights mean_weights(const BnnModel& model) {
    RealizedWeights w;
    for (const auto& L : model.layers) {
        w.weights.push_back(L.weight_mean);
        w.biases.push_back(L.bias_mean);
    }
    return w;
}

Eigen::MatrixXd forward_batch(const BnnModel& model, const RealizedWeights& w, const Eigen::MatrixXd& x) {
    if (model.layers.empty() || x.cols() != model.layers.front().in()) {
        throw dimension_error(fmt::format("input width {} does not match model input width {}", x.cols(),
                                          model.input_width()));
    }
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < w.weights.size(); ++l) {
        Eigen::MatrixXd z = a * w.weights[l].transpose();
        z.rowwise() += w.biases[l].transpose();
        if (l + 1 < w.weights.size()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

Eigen::VectorXd forward(const BnnModel& model, const RealizedWeights& w, const Eigen::VectorXd& x) {
    return forward_batch(model, w, x.transpose()).row(0).transpose();
}

ClassDistribution softmax(const Eigen::VectorXd& logits) {
    if (logits.size() != static_cast<Eigen::Index>(kNumClasses)) throw dimension_error("softmax expects 5 logits");
    const double m = logits.maxCoeff();
    std::array<double, kNumClasses> e{};
    double total = 0.0;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        e[i] = std::exp(logits(static_cast<Eigen::Index>(i)) - m);
        total += e[i];
    }
    ClassDistribution d;
    for (std::size_t i = 0; i < kNumClasses; ++i) d[i] = e[i] / total;
    return d;
}

double kl_mean_field(const BnnModel& model) {
    double kl = 0.0;
    for (const auto& L : model.layers) {
        kl += kl_term_sum(L.weight_mean.array(), softplus_of(L.weight_rho).array(), L.prior_sigma);
        kl += kl_term_sum(L.bias_mean.array(), softplus_of(L.bias_rho).array(), L.prior_sigma);
    }
    return kl;
}

ElboResult elbo_minus(const BnnModel& model, const Eigen::MatrixXd& x, std::span<const int> labels, int mc_samples,
                      std::size_t total_batches, Rng& rng) {
    const auto n = x.rows();
    if (n == 0) throw data_error("elbo_minus needs a nonempty batch");
    if (static_cast<std::size_t>(n) != labels.size()) throw dimension_error("batch rows and labels differ in length");
    if (mc_samples < 1 || total_batches < 1) throw config_error("mc_samples and total_batches must be >= 1");
    const std::size_t depth = model.layers.size();

    ElboResult res;
    res.grads.resize(depth);
    std::vector<Eigen::MatrixXd> sig_w(depth), sig_b(depth), dsig_w(depth), dsig_b(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& L = model.layers[l];
        res.grads[l] = {Eigen::MatrixXd::Zero(L.out(), L.in()), Eigen::MatrixXd::Zero(L.out(), L.in()),
                        Eigen::VectorXd::Zero(L.out()), Eigen::VectorXd::Zero(L.out())};
        sig_w[l] = softplus_of(L.weight_rho);
        sig_b[l] = softplus_of(L.bias_rho);
        dsig_w[l] = sigmoid_of(L.weight_rho);
        dsig_b[l] = sigmoid_of(L.bias_rho);
    }

    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kNumClasses));
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;

    const double scale = 1.0 / (static_cast<double>(n) * mc_samples);
    for (int s = 0; s < mc_samples; ++s) {
        RealizedWeights eps;
        const RealizedWeights w = sample_weights(model, rng, &eps);

        // Forward, keeping pre-activations for the backward pass.
        std::vector<Eigen::MatrixXd> acts{x};
        std::vector<Eigen::MatrixXd> pre;
        for (std::size_t l = 0; l < depth; ++l) {
            Eigen::MatrixXd z = acts.back() * w.weights[l].transpose();
            z.rowwise() += w.biases[l].transpose();
            pre.push_back(z);
            if (l + 1 < depth) acts.push_back(z.cwiseMax(0.0));
        }
        const Eigen::MatrixXd& logits = pre.back();
        const Eigen::VectorXd lse = row_logsumexp(logits);
        double nll = 0.0;
        Eigen::MatrixXd probs(n, logits.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            nll += lse(i) - logits(i, labels[static_cast<std::size_t>(i)]);
            probs.row(i) = (logits.row(i).array() - lse(i)).exp();
        }
        res.mean_nll += nll * scale;

        Eigen::MatrixXd dz = (probs - onehot) * scale;
        for (std::size_t l = depth; l-- > 0;) {
            const Eigen::MatrixXd dw = dz.transpose() * acts[l];
            const Eigen::VectorXd db = dz.colwise().sum().transpose();
            auto& g = res.grads[l];
            g.weight_mean += dw;
            g.weight_rho += dw.cwiseProduct(eps.weights[l]).cwiseProduct(dsig_w[l]);
            g.bias_mean += db;
            g.bias_rho += db.cwiseProduct(eps.biases[l]).cwiseProduct(dsig_b[l]);
            if (l > 0) {
                Eigen::MatrixXd da = dz * w.weights[l];
                dz = da.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
            }
        }
    }

    res.kl = kl_mean_field(model);
    const double kl_weight = 1.0 / (static_cast<double>(total_batches) * static_cast<double>(n));
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& L = model.layers[l];
        const double ps2 = L.prior_sigma * L.prior_sigma;
        auto& g = res.grads[l];
        g.weight_mean += kl_weight * L.weight_mean / ps2;
        g.weight_rho += kl_weight * ((sig_w[l].array() / ps2 - sig_w[l].array().inverse()) * dsig_w[l].array()).matrix();
        g.bias_mean += kl_weight * L.bias_mean / ps2;
        g.bias_rho += kl_weight * ((sig_b[l].array() / ps2 - sig_b[l].array().inverse()) * dsig_b[l].array()).matrix();
    }
    res.loss = res.mean_nll + kl_weight * res.kl;
    return res;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw config_error("learning_rate must be positive");
    if (batch_size < 1 || max_epochs < 1) throw config_error("batch_size and max_epochs must be >= 1");
    if (mc_train_samples < 1 || mc_predict_samples < 1 || mc_val_samples < 1) {
        throw config_error("Monte-Carlo sample counts must be >= 1");
    }
}

namespace {

struct AdamState {
    std::vector<LayerGradients> m, v;
    std::size_t t = 0;
};

void adam_step(BnnModel& model, const std::vector<LayerGradients>& g, AdamState& st, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (st.m.empty()) {
        for (const auto& gl : g) {
            LayerGradients z{Eigen::MatrixXd::Zero(gl.weight_mean.rows(), gl.weight_mean.cols()),
                             Eigen::MatrixXd::Zero(gl.weight_rho.rows(), gl.weight_rho.cols()),
                             Eigen::VectorXd::Zero(gl.bias_mean.size()), Eigen::VectorXd::Zero(gl.bias_rho.size())};
            st.m.push_back(z);
            st.v.push_back(z);
        }
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < g.size(); ++l) {
        auto& L = model.layers[l];
        update(L.weight_mean, g[l].weight_mean, st.m[l].weight_mean, st.v[l].weight_mean);
        update(L.weight_rho, g[l].weight_rho, st.m[l].weight_rho, st.v[l].weight_rho);
        update(L.bias_mean, g[l].bias_mean, st.m[l].bias_mean, st.v[l].bias_mean);
        update(L.bias_rho, g[l].bias_rho, st.m[l].bias_rho, st.v[l].bias_rho);
    }
}

// MC cross-entropy with fixed noise so successive epochs are compared on common random numbers.
double validation_loss(const BnnModel& model, const Eigen::MatrixXd& x, std::span<const int> y, int samples,
                       std::uint64_t seed, std::size_t n_train) {
    if (x.rows() == 0) return kl_mean_field(model) / static_cast<double>(n_train);
    double nll = 0.0;
    for (int s = 0; s < samples; ++s) {
        Rng rng = derived_stream(seed, static_cast<std::uint64_t>(s));
        const auto logits = forward_batch(model, sample_weights(model, rng), x);
        const auto lse = row_logsumexp(logits);
        for (Eigen::Index i = 0; i < x.rows(); ++i) nll += lse(i) - logits(i, y[static_cast<std::size_t>(i)]);
    }
    return nll / (static_cast<double>(x.rows()) * samples) + kl_mean_field(model) / static_cast<double>(n_train);
}

}  // namespace

TrainResult train(BnnModel model, std::span<const LabeledExample> train_set,
                  std::span<const LabeledExample> validation_set, int window, const TrainConfig& config) {
    config.validate();
    model.validate();
    if (train_set.empty()) throw data_error("training set is empty");

    const Eigen::MatrixXd x = encode_examples(train_set, model.schema);
    const std::vector<int> y = window_labels(train_set, window);
    const Eigen::MatrixXd xv = encode_examples(validation_set, model.schema);
    const std::vector<int> yv = window_labels(validation_set, window);

    const std::size_t n = train_set.size();
    const std::size_t bs = std::min(config.batch_size, n);
    const std::size_t n_batches = (n + bs - 1) / bs;
    const std::uint64_t val_seed = mix64(config.seed ^ 0x76616c69ULL);

    Rng rng{mix64(config.seed)};
    AdamState adam;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult out;
    BnnModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t lo = b * bs;
            const std::size_t hi = std::min(n, lo + bs);
            Eigen::MatrixXd xb(static_cast<Eigen::Index>(hi - lo), x.cols());
            std::vector<int> yb(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                xb.row(static_cast<Eigen::Index>(i - lo)) = x.row(static_cast<Eigen::Index>(order[i]));
                yb[i - lo] = y[order[i]];
            }
            const auto r = elbo_minus(model, xb, yb, config.mc_train_samples, n_batches, rng);
            loss_sum += r.loss * static_cast<double>(hi - lo);
            adam_step(model, r.grads, adam, config.learning_rate);
        }
        EpochLog row{epoch, loss_sum / static_cast<double>(n),
                     validation_loss(model, xv, yv, config.mc_val_samples, val_seed, n), false};
        if (row.val_loss < best_val) {
            best_val = row.val_loss;
            best = model;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }
        const bool stop = bad_epochs > config.patience;
        row.stopped_early = stop;
        out.log.push_back(row);
        if (stop) break;
    }
    out.model = std::move(best);
    return out;
}

ClassDistribution posterior_predictive(const BnnModel& model, const Eigen::VectorXd& x, int samples,
                                       std::uint64_t seed) {
    return posterior_predictive_batch(model, x.transpose(), samples, seed).front();
}

std::vector<ClassDistribution> posterior_predictive_batch(const BnnModel& model, const Eigen::MatrixXd& x, int samples,
                                                          std::uint64_t seed) {
    if (samples < 1) throw config_error("posterior predictive needs at least one sample");
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(kNumClasses));
    for (int s = 0; s < samples; ++s) {
        Rng rng = derived_stream(seed, static_cast<std::uint64_t>(s));
        const Eigen::MatrixXd logits = forward_batch(model, sample_weights(model, rng), x);
        const Eigen::VectorXd lse = row_logsumexp(logits);
        for (Eigen::Index i = 0; i < x.rows(); ++i) acc.row(i) += (logits.row(i).array() - lse(i)).exp().matrix();
    }
    std::vector<ClassDistribution> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        auto& d = out[static_cast<std::size_t>(i)];
        double total = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) total += acc(i, static_cast<Eigen::Index>(c));
        for (std::size_t c = 0; c < kNumClasses; ++c) d[c] = acc(i, static_cast<Eigen::Index>(c)) / total;
    }
    return out;
}

std::optional<OccupancyClass> confident_prediction(const ClassDistribution& dist, double threshold) {
    const auto best = dist.argmax();
    if (dist[static_cast<std::size_t>(index_of(best))] > threshold) return best;
    return std::nullopt;
}

void write_training_log(std::ostream& out, std::span<const EpochLog> log) {
    out << "epoch,train_loss,val_loss,stopped_early\n";
    for (const auto& r : log) {
        out << fmt::format("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.stopped_early ? "true" : "false");
    }
}

}  // namespace nesy

// ---------------------------------------------------------------------------
// Checkpoints

namespace nesy {

namespace {

using json = nlohmann::json;

json flatten(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
    }
    return a;
}

Eigen::MatrixXd unflatten(const json& a, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows * cols) {
        throw data_error(fmt::format("checkpoint: '{}' has {} entries, expected {}", what, a.size(), rows * cols));
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = a[static_cast<std::size_t>(i * cols + j)].get<double>();
    }
    return m;
}

}  // namespace

std::string serialize_checkpoint(const BnnModel& model, const TrainConfig& config, int window) {
    json layers = json::array();
    for (const auto& L : model.layers) {
        layers.push_back({{"in", L.in()},
                          {"out", L.out()},
                          {"prior_sigma", L.prior_sigma},
                          {"weight_mean", flatten(L.weight_mean)},
                          {"weight_rho", flatten(L.weight_rho)},
                          {"bias_mean", flatten(L.bias_mean)},
                          {"bias_rho", flatten(L.bias_rho)}});
    }
    json cfg{{"learning_rate", config.learning_rate}, {"batch_size", config.batch_size},
             {"max_epochs", config.max_epochs},       {"patience", config.patience},
             {"mc_train_samples", config.mc_train_samples}, {"mc_predict_samples", config.mc_predict_samples},
             {"mc_val_samples", config.mc_val_samples}};
    json doc{{"format", "nesy-bnn-checkpoint/1"},
             {"window", window},
             {"schema_hash", schema_hash(model.schema)},
             {"schema", codec::schema_to_json(model.schema)},
             {"layers", layers},
             {"prior_sigma", model.layers.empty() ? 1.0 : model.layers.front().prior_sigma},
             {"train_config", cfg},
             {"seed", config.seed}};
    return doc.dump();
}

Checkpoint parse_checkpoint(std::string_view json_text) {
    Checkpoint cp;
    try {
        const auto doc = json::parse(json_text);
        cp.window = doc.at("window").get<int>();
        cp.model.schema = codec::schema_from_json(doc.at("schema"));
        if (doc.at("schema_hash").get<std::string>() != schema_hash(cp.model.schema)) {
            throw integrity_error("checkpoint: schema hash does not match the embedded schema");
        }
        for (const auto& jl : doc.at("layers")) {
            const auto in = jl.at("in").get<Eigen::Index>();
            const auto out = jl.at("out").get<Eigen::Index>();
            VariationalLayer L;
            L.prior_sigma = jl.at("prior_sigma").get<double>();
            L.weight_mean = unflatten(jl.at("weight_mean"), out, in, "weight_mean");
            L.weight_rho = unflatten(jl.at("weight_rho"), out, in, "weight_rho");
            L.bias_mean = unflatten(jl.at("bias_mean"), out, 1, "bias_mean");
            L.bias_rho = unflatten(jl.at("bias_rho"), out, 1, "bias_rho");
            cp.model.layers.push_back(std::move(L));
        }
        const auto& c = doc.at("train_config");
        cp.config.learning_rate = c.at("learning_rate").get<double>();
        cp.config.batch_size = c.at("batch_size").get<std::size_t>();
        cp.config.max_epochs = c.at("max_epochs").get<std::size_t>();
        cp.config.patience = c.at("patience").get<std::size_t>();
        cp.config.mc_train_samples = c.at("mc_train_samples").get<int>();
        cp.config.mc_predict_samples = c.at("mc_predict_samples").get<int>();
        cp.config.mc_val_samples = c.value("mc_val_samples", 4);
        cp.config.seed = doc.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw data_error(std::string("checkpoint: ") + e.what());
    }
    cp.model.validate();
    if (cp.model.input_width() != cp.model.schema.width()) {
        throw dimension_error("checkpoint: input layer width does not match the schema");
    }
    return cp;
}

}  // namespace nesy
